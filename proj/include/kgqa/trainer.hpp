#pragma once

#include <functional>
#include <string>
#include <vector>

#include "kgqa/model.hpp"

namespace kgqa {

struct EpochMetrics {
    int epoch = 0;
    double train_loss = 0.0;
    double dev_acc = 0.0;
    double seconds = 0.0;
};

struct TrainOptions {
    int threads = 1;
    std::function<void(const EpochMetrics&)> on_epoch;
};

// End-to-end cross-entropy training. Parameters whose names start with "lm."
// form the LM partition: they use lr_lm and stay bit-unchanged during the
// first freeze_lm_epochs epochs; everything else uses lr_other. Gradients are
// globally norm-clipped at grad_clip. Two runs with the same config produce
// bit-identical parameters for any thread count.
class Trainer {
public:
    explicit Trainer(ModelParams& mp);

    std::vector<EpochMetrics> fit(const std::vector<PreparedExample>& train,
                                  const std::vector<PreparedExample>& dev,
                                  const TrainOptions& opts = {});

    // Post-clip global gradient norm of the most recent step (test hook).
    double last_clipped_norm() const { return last_clipped_norm_; }

private:
    void apply_update(int epoch);

    ModelParams& mp_;
    std::vector<Tensor> m_, v_;  // Adam moments, store order
    std::vector<uint8_t> is_lm_;
    int64_t step_ = 0;
    double last_clipped_norm_ = 0.0;
};

// Eval-mode logits for one example (dropout off).
std::vector<float> example_logits(ModelParams& mp, const PreparedExample& ex);

// Fraction of examples whose argmax matches the label.
double dataset_accuracy(ModelParams& mp, const std::vector<PreparedExample>& ds, int threads);

// Checkpoint directory: weight manifest + weights plus config.cfg, vocab.txt
// and registry.json so a run can be reloaded standalone. Written atomically.
void save_model_dir(const std::string& dir, const ModelParams& mp, const Vocabulary& vocab,
                    const EntityRegistry& registry);

struct LoadedModel {
    RunConfig cfg;
    Vocabulary vocab;
    EntityRegistry registry;
    ModelParams params;
};

LoadedModel load_model_dir(const std::string& dir);

}  // namespace kgqa
