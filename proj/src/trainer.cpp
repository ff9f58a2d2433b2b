#include "kgqa/trainer.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>

#include "kgqa/threadpool.hpp"

namespace kgqa {

namespace {

bool in_lm_partition(const std::string& name) { return name.rfind("lm.", 0) == 0; }

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

}  // namespace

Trainer::Trainer(ModelParams& mp) : mp_(mp) {
    for (auto& p : mp_.store) {
        m_.emplace_back(p.value.rows, p.value.cols);
        v_.emplace_back(p.value.rows, p.value.cols);
        is_lm_.push_back(in_lm_partition(p.name) ? 1 : 0);
    }
}

void Trainer::apply_update(int epoch) {
    const RunConfig& cfg = mp_.cfg;
    const bool lm_frozen = epoch < cfg.freeze_lm_epochs;

    // global-norm clip over the parameters that will update this step
    double norm_sq = 0.0;
    size_t idx = 0;
    for (auto& p : mp_.store) {
        bool frozen = !p.trainable || (is_lm_[idx] && lm_frozen);
        if (!frozen)
            for (float gv : p.grad.data) norm_sq += double(gv) * double(gv);
        ++idx;
    }
    double norm = std::sqrt(norm_sq);
    if (norm > cfg.grad_clip) {
        const float scale = float(cfg.grad_clip / norm);
        for (auto& p : mp_.store)
            for (auto& gv : p.grad.data) gv *= scale;
    }
    last_clipped_norm_ = std::min(norm, cfg.grad_clip);

    ++step_;
    const double t = double(step_);
    const double bc1 = 1.0 - std::pow(kBeta1, t);
    const double bc2 = 1.0 - std::pow(kBeta2, t);

    // rectification term (optional optimizer variant)
    double r_t = 1.0;
    bool rectified_ready = true;
    if (cfg.optimizer == Optimizer::radam) {
        const double rho_inf = 2.0 / (1.0 - kBeta2) - 1.0;
        const double rho_t = rho_inf - 2.0 * t * std::pow(kBeta2, t) / bc2;
        if (rho_t > 4.0) {
            r_t = std::sqrt(((rho_t - 4.0) * (rho_t - 2.0) * rho_inf) /
                            ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t));
        } else {
            rectified_ready = false;
        }
    }

    idx = 0;
    for (auto& p : mp_.store) {
        bool frozen = !p.trainable || (is_lm_[idx] && lm_frozen);
        if (frozen) {
            ++idx;
            continue;
        }
        const double lr = is_lm_[idx] ? cfg.lr_lm : cfg.lr_other;
        auto& m = m_[idx];
        auto& v = v_[idx];
        for (size_t k = 0; k < p.value.numel(); ++k) {
            double g = double(p.grad.data[k]);
            double mk = kBeta1 * m.data[k] + (1.0 - kBeta1) * g;
            double vk = kBeta2 * v.data[k] + (1.0 - kBeta2) * g * g;
            m.data[k] = float(mk);
            v.data[k] = float(vk);
            double m_hat = mk / bc1;
            double update;
            if (cfg.optimizer == Optimizer::radam && !rectified_ready) {
                update = lr * m_hat;  // un-adapted warmup step
            } else {
                double v_hat = vk / bc2;
                update = lr * r_t * m_hat / (std::sqrt(v_hat) + kAdamEps);
            }
            p.value.data[k] = float(double(p.value.data[k]) - update);
        }
        ++idx;
    }
}

std::vector<EpochMetrics> Trainer::fit(const std::vector<PreparedExample>& train,
                                       const std::vector<PreparedExample>& dev,
                                       const TrainOptions& opts) {
    const RunConfig& cfg = mp_.cfg;
    require(!train.empty(), "train: empty dataset");
    const int threads = std::max(1, opts.threads);

    std::vector<EpochMetrics> log;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();

        std::vector<int> order(train.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = int(i);
        Rng shuffle_rng(mix64(cfg.seed, uint64_t(epoch) + 1));
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        int n_batches = 0;
        for (size_t start = 0; start < order.size(); start += size_t(cfg.batch_size)) {
            size_t end = std::min(order.size(), start + size_t(cfg.batch_size));
            const int n = int(end - start);

            mp_.store.zero_grads();
            std::vector<std::unique_ptr<Graph>> graphs(static_cast<size_t>(n));
            std::vector<double> losses(static_cast<size_t>(n));
            const int64_t step_for_seed = step_;
            parallel_for(threads, n, [&](int i) {
                const PreparedExample& ex = *&train[size_t(order[start + size_t(i)])];
                graphs[size_t(i)] = std::make_unique<Graph>();
                uint64_t drop_seed =
                    mix64(mix64(cfg.seed, uint64_t(step_for_seed)), hash_str(ex.id));
                auto fwd = forward_example(*graphs[size_t(i)], mp_, ex, drop_seed,
                                           /*train_mode=*/true);
                losses[size_t(i)] = double(graphs[size_t(i)]->value(fwd.loss).at(0, 0));
                graphs[size_t(i)]->backward(fwd.loss, /*accumulate_into_params=*/false);
            });
            double batch_loss = 0.0;
            for (int i = 0; i < n; ++i) {
                if (!std::isfinite(losses[size_t(i)])) {
                    fail("train: non-finite loss at epoch ", epoch, ", batch ", n_batches,
                         ", example '", train[size_t(order[start + size_t(i)])].id, "'");
                }
                graphs[size_t(i)]->flush_param_grads();
                batch_loss += losses[size_t(i)];
            }
            // mean-loss gradients
            const float inv_n = 1.0f / float(n);
            for (auto& p : mp_.store)
                for (auto& gv : p.grad.data) gv *= inv_n;
            loss_sum += batch_loss;
            ++n_batches;
            apply_update(epoch);
        }

        EpochMetrics em;
        em.epoch = epoch;
        em.train_loss = loss_sum / double(train.size());
        em.dev_acc = dev.empty() ? 0.0 : dataset_accuracy(mp_, dev, threads);
        em.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        log.push_back(em);
        if (opts.on_epoch) opts.on_epoch(em);
    }
    return log;
}

std::vector<float> example_logits(ModelParams& mp, const PreparedExample& ex) {
    Graph g;
    auto fwd = forward_example(g, mp, ex, /*dropout_seed=*/0, /*train_mode=*/false);
    const auto& row = g.value(fwd.logits);
    return {row.data.begin(), row.data.end()};
}

double dataset_accuracy(ModelParams& mp, const std::vector<PreparedExample>& ds, int threads) {
    if (ds.empty()) return 0.0;
    std::vector<uint8_t> hit(ds.size(), 0);
    parallel_for(threads, int(ds.size()), [&](int i) {
        auto logits = example_logits(mp, ds[size_t(i)]);
        hit[size_t(i)] = predict_index(logits) == ds[size_t(i)].label ? 1 : 0;
    });
    size_t correct = 0;
    for (uint8_t h : hit) correct += h;
    return double(correct) / double(ds.size());
}

void save_model_dir(const std::string& dir, const ModelParams& mp, const Vocabulary& vocab,
                    const EntityRegistry& registry) {
    namespace fs = std::filesystem;
    fs::path final_dir(dir);
    fs::path tmp = final_dir;
    tmp += ".staging";
    std::error_code ec;
    fs::remove_all(tmp, ec);
    fs::create_directories(tmp);

    write_checkpoint_files(tmp.string(), mp.store);
    {
        std::ofstream f(tmp / "config.cfg", std::ios::trunc);
        require(f.good(), "save_model_dir: cannot write config");
        f << serialize_config(mp.cfg);
    }
    vocab.save((tmp / "vocab.txt").string());
    registry.save((tmp / "registry.json").string());

    fs::remove_all(final_dir, ec);
    fs::rename(tmp, final_dir);
}

LoadedModel load_model_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    fs::path d(dir);
    require(fs::exists(d / "config.cfg"), "load_model_dir: ", dir, " has no config.cfg");
    LoadedModel lm{load_config_file((d / "config.cfg").string()), Vocabulary(), EntityRegistry(),
                   ModelParams{}};
    lm.vocab = Vocabulary::load((d / "vocab.txt").string());
    lm.registry = EntityRegistry::load((d / "registry.json").string());
    lm.params =
        build_model<float>(lm.cfg, lm.vocab.size(), lm.registry.size(), lm.registry.n_relations);
    load_checkpoint(dir, lm.params.store);
    return lm;
}

}  // namespace kgqa
