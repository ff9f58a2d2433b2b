// kgqa: knowledge-graph-augmented multiple-choice QA, end to end.
//
// Subcommands: gen-kg, gen-data, retrieve, train, eval, gradcheck, trace,
// ablate. Every command echoes its fully-resolved configuration as a single
// '#'-prefixed line before any other output, takes all randomness from
// --seed / the config seed, and writes only to paths given via --out flags.
// Exit codes: 0 success, 1 usage error, 2 runtime or data error.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "kgqa/ablation.hpp"
#include "kgqa/evaluate.hpp"
#include "kgqa/kg.hpp"
#include "kgqa/trace.hpp"
#include "kgqa/trainer.hpp"

namespace {

using namespace kgqa;

struct KgPaths {
    std::string nodes, relations, edges;
    bool given() const { return !nodes.empty() || !relations.empty() || !edges.empty(); }
};

void add_kg_options(CLI::App* cmd, KgPaths& paths) {
    cmd->add_option("--kg-nodes", paths.nodes, "global KG nodes.tsv");
    cmd->add_option("--kg-relations", paths.relations, "global KG relations.tsv");
    cmd->add_option("--kg-edges", paths.edges, "global KG edges.tsv");
}

std::optional<KnowledgeGraph> maybe_load_kg(const KgPaths& p) {
    if (!p.given()) return std::nullopt;
    require(!p.nodes.empty() && !p.relations.empty() && !p.edges.empty(),
            "all of --kg-nodes/--kg-relations/--kg-edges are required together");
    return load_kg(p.nodes, p.relations, p.edges);
}

std::string one_line(std::string s) {
    for (auto& c : s)
        if (c == '\n') c = ' ';
    return s;
}

void echo_config(const std::string& command, const RunConfig& cfg,
                 const std::string& extras = "") {
    std::string flat = serialize_config(cfg);
    for (auto& c : flat)
        if (c == '\n') c = ' ';
    std::cout << "# command=" << command << ' ' << flat << extras << '\n';
}

// config file / preset + flag overrides; flags win
struct ConfigArgs {
    std::string config_path;
    std::vector<std::string> sets;
    std::optional<uint64_t> seed;

    RunConfig resolve() const {
        RunConfig cfg;
        if (!config_path.empty()) cfg = load_config_file(config_path);
        for (const auto& kv : sets) {
            size_t eq = kv.find('=');
            require(eq != std::string::npos, "--set expects key=value, got '", kv, "'");
            apply_config_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
        }
        if (seed) cfg.seed = *seed;
        cfg.validate();
        return cfg;
    }
};

void add_config_options(CLI::App* cmd, ConfigArgs& args) {
    cmd->add_option("--config", args.config_path,
                    "config file path or preset name (desk, csqa-paper, obqa-paper, medqa-paper)");
    cmd->add_option("--set", args.sets, "config override key=value (repeatable; wins over file)");
    cmd->add_option("--seed", args.seed, "seed override");
}

struct PreparedWorld {
    Vocabulary vocab;
    EntityRegistry registry;
    std::optional<KnowledgeGraph> global_kg;
    Dataset raw;
    std::vector<PreparedExample> prepared;
};

PreparedWorld prepare_world(const Dataset& ds, const RunConfig& cfg, const KgPaths& kg_paths,
                            int threads, bool bypass) {
    PreparedWorld w;
    w.raw = ds;
    w.global_kg = maybe_load_kg(kg_paths);
    std::vector<std::string> texts;
    for (const auto& ex : ds) {
        texts.push_back(ex.context);
        texts.push_back(ex.question);
        for (const auto& c : ex.candidates) texts.push_back(c);
    }
    w.vocab = Vocabulary::build(texts);
    w.registry = w.global_kg ? build_registry(*w.global_kg) : build_registry(ds);
    w.prepared = prepare_dataset(ds, w.vocab, w.registry,
                                 w.global_kg ? &*w.global_kg : nullptr, cfg, threads, bypass);
    return w;
}

int run_cli(int argc, char** argv) {
    CLI::App app{"knowledge-graph fused multiple-choice QA"};
    app.require_subcommand(1);

    // ---- gen-kg ----
    auto* gen_kg_cmd = app.add_subcommand("gen-kg", "generate a deterministic toy KG as TSVs");
    uint64_t gk_seed = 1;
    int gk_nodes = 50, gk_relations = 4;
    double gk_density = 0.1;
    std::string gk_out = "kg";
    gen_kg_cmd->add_option("--seed", gk_seed, "generation seed");
    gen_kg_cmd->add_option("--n-nodes", gk_nodes, "node count");
    gen_kg_cmd->add_option("--n-relations", gk_relations, "relation count");
    gen_kg_cmd->add_option("--density", gk_density, "edge density in (0,1]");
    gen_kg_cmd->add_option("--out", gk_out, "output prefix (writes <out>.nodes.tsv etc)")
        ->required();

    // ---- gen-data ----
    auto* gen_data_cmd = app.add_subcommand("gen-data", "generate the synthetic MCQA dataset");
    uint64_t gd_seed = 1;
    int gd_n = 1000, gd_k = 5, gd_threads = 1;
    double gd_neg = 0.5, gd_hedge = 0.2;
    std::string gd_out;
    gen_data_cmd->add_option("--seed", gd_seed, "generation seed");
    gen_data_cmd->add_option("--n", gd_n, "example count");
    gen_data_cmd->add_option("--k", gd_k, "candidates per question (4 or 5)");
    gen_data_cmd->add_option("--negation-rate", gd_neg, "fraction of negated questions");
    gen_data_cmd->add_option("--hedge-rate", gd_hedge, "fraction of hedged questions");
    gen_data_cmd->add_option("--threads", gd_threads, "worker threads");
    gen_data_cmd->add_option("--out", gd_out, "output JSONL path")->required();

    // ---- retrieve ----
    auto* retrieve_cmd =
        app.add_subcommand("retrieve", "run subgraph retrieval and write the JSONL cache");
    ConfigArgs rt_cfg;
    KgPaths rt_kg;
    std::string rt_data, rt_out;
    int rt_threads = 1;
    bool rt_bypass = false;
    add_config_options(retrieve_cmd, rt_cfg);
    add_kg_options(retrieve_cmd, rt_kg);
    retrieve_cmd->add_option("--data", rt_data, "dataset JSONL")->required();
    retrieve_cmd->add_option("--out", rt_out, "cache JSONL output")->required();
    retrieve_cmd->add_option("--threads", rt_threads, "worker threads");
    retrieve_cmd->add_flag("--bypass-retrieval", rt_bypass,
                           "take whole per-example KGs instead of running the pipeline");

    // ---- train ----
    auto* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint");
    ConfigArgs tr_cfg;
    KgPaths tr_kg;
    std::string tr_data, tr_dev, tr_out, tr_metrics;
    int tr_threads = 1;
    bool tr_bypass = false;
    add_config_options(train_cmd, tr_cfg);
    add_kg_options(train_cmd, tr_kg);
    train_cmd->add_option("--data", tr_data, "training dataset JSONL")->required();
    train_cmd->add_option("--dev", tr_dev, "dev dataset JSONL (accuracy per epoch)");
    train_cmd->add_option("--out", tr_out, "checkpoint directory")->required();
    train_cmd->add_option("--metrics", tr_metrics, "metrics JSONL output");
    train_cmd->add_option("--threads", tr_threads, "worker threads");
    train_cmd->add_flag("--bypass-retrieval", tr_bypass,
                        "take whole per-example KGs instead of running the pipeline");

    // ---- eval ----
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint with stratified report");
    KgPaths ev_kg;
    std::string ev_ckpt, ev_data, ev_out;
    std::string ev_negation, ev_hedge, ev_preps;
    int ev_threads = 1;
    bool ev_bypass = false;
    add_kg_options(eval_cmd, ev_kg);
    eval_cmd->add_option("--checkpoint", ev_ckpt, "checkpoint directory")->required();
    eval_cmd->add_option("--data", ev_data, "dataset JSONL")->required();
    eval_cmd->add_option("--out", ev_out, "report JSON output");
    eval_cmd->add_option("--negation-terms", ev_negation, "comma-separated negation terms");
    eval_cmd->add_option("--hedge-terms", ev_hedge, "comma-separated hedge terms");
    eval_cmd->add_option("--preposition-terms", ev_preps, "comma-separated preposition lexicon");
    eval_cmd->add_option("--threads", ev_threads, "worker threads");
    eval_cmd->add_flag("--bypass-retrieval", ev_bypass,
                       "take whole per-example KGs instead of running the pipeline");

    // ---- gradcheck ----
    auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference check of the full model");
    ConfigArgs gc_cfg;
    double gc_eps = 1e-4;
    int gc_coords = 120;
    gc_cmd->add_option("--config", gc_cfg.config_path, "config file or preset");
    gc_cmd->add_option("--set", gc_cfg.sets, "config override key=value");
    gc_cmd->add_option("--seed", gc_cfg.seed, "seed override");
    gc_cmd->add_option("--epsilon", gc_eps, "central difference step");
    gc_cmd->add_option("--coords", gc_coords, "sampled coordinates");

    // ---- trace ----
    auto* trace_cmd =
        app.add_subcommand("trace", "interaction-node attention trace for one example");
    KgPaths tc_kg;
    std::string tc_ckpt, tc_data, tc_example, tc_out;
    bool tc_bypass = false;
    add_kg_options(trace_cmd, tc_kg);
    trace_cmd->add_option("--checkpoint", tc_ckpt, "checkpoint directory")->required();
    trace_cmd->add_option("--data", tc_data, "dataset JSONL")->required();
    trace_cmd->add_option("--example", tc_example, "example id (default: first)");
    trace_cmd->add_option("--out", tc_out, "trace JSON output");
    trace_cmd->add_flag("--bypass-retrieval", tc_bypass,
                        "take whole per-example KGs instead of running the pipeline");

    // ---- ablate ----
    auto* ablate_cmd = app.add_subcommand("ablate", "train config variants and report a table");
    ConfigArgs ab_cfg;
    KgPaths ab_kg;
    std::string ab_train, ab_dev, ab_suite, ab_out;
    std::vector<uint64_t> ab_seeds{1, 2, 3};
    int ab_threads = 1;
    add_config_options(ablate_cmd, ab_cfg);
    add_kg_options(ablate_cmd, ab_kg);
    ablate_cmd->add_option("--data", ab_train, "training dataset JSONL")->required();
    ablate_cmd->add_option("--dev", ab_dev, "dev dataset JSONL")->required();
    ablate_cmd->add_option("--suite", ab_suite, "suite TSV (default: built-in component suite)");
    ablate_cmd->add_option("--seeds", ab_seeds, "seeds (default 1 2 3)");
    ablate_cmd->add_option("--threads", ab_threads, "worker threads");
    ablate_cmd->add_option("--out", ab_out, "report TSV output")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    if (gen_kg_cmd->parsed()) {
        std::cout << "# command=gen-kg seed=" << gk_seed << " n_nodes=" << gk_nodes
                  << " n_relations=" << gk_relations << " density=" << gk_density
                  << " out=" << gk_out << '\n';
        auto kg = gen_toy_kg(gk_seed, gk_nodes, gk_relations, gk_density);
        save_kg(kg, gk_out + ".nodes.tsv", gk_out + ".relations.tsv", gk_out + ".edges.tsv");
        std::cout << "wrote " << gk_out << ".{nodes,relations,edges}.tsv with " << kg.num_nodes()
                  << " nodes, " << kg.edges().size() << " edges\n";
        return 0;
    }

    if (gen_data_cmd->parsed()) {
        std::cout << "# command=gen-data seed=" << gd_seed << " n=" << gd_n << " k=" << gd_k
                  << " negation_rate=" << gd_neg << " hedge_rate=" << gd_hedge
                  << " threads=" << gd_threads << " out=" << gd_out << '\n';
        auto ds = gen_synthetic_mcqa(gd_seed, gd_n, gd_k, gd_neg, gd_hedge, gd_threads);
        save_dataset(ds, gd_out);
        std::cout << "wrote " << ds.size() << " examples to " << gd_out << '\n';
        return 0;
    }

    if (retrieve_cmd->parsed()) {
        RunConfig cfg = rt_cfg.resolve();
        echo_config("retrieve", cfg, cat(" data=", rt_data, " threads=", rt_threads,
                                         " bypass_retrieval=", rt_bypass ? "true" : "false",
                                         " out=", rt_out));
        auto ds = load_dataset(rt_data);
        auto world = prepare_world(ds, cfg, rt_kg, rt_threads, rt_bypass);
        // re-run per example to serialize subgraphs (prepared plans drop them)
        std::ofstream out(rt_out, std::ios::trunc | std::ios::binary);
        require(out.good(), "retrieve: cannot write ", rt_out);
        RetrievalConfig rcfg;
        rcfg.top_k = cfg.top_k_nodes;
        rcfg.connectivity = cfg.connectivity_mode == Connectivity::linked_only
                                ? ConnectivityMode::linked_only
                                : ConnectivityMode::all_nodes;
        rcfg.directed_bridges = cfg.directed_bridges;
        int written = 0;
        for (const auto& ex : ds) {
            KnowledgeGraph payload;
            const KnowledgeGraph* kg = nullptr;
            if (ex.kg) {
                payload = payload_to_kg(*ex.kg);
                kg = &payload;
            } else {
                require(world.global_kg.has_value(), "retrieve: example ", ex.id,
                        " has no KG payload and no global KG was given");
                kg = &*world.global_kg;
            }
            for (size_t c = 0; c < ex.candidates.size(); ++c) {
                Subgraph sg = rt_bypass
                                  ? whole_kg_subgraph(ex.context, ex.question, ex.candidates[c],
                                                      *kg, rcfg.connectivity)
                                  : retrieve_subgraph(ex.context, ex.question, ex.candidates[c],
                                                      *kg, rcfg);
                out << subgraph_to_json(cat(ex.id, ":", c), sg) << '\n';
                ++written;
            }
        }
        std::cout << "wrote " << written << " subgraphs to " << rt_out << '\n';
        return 0;
    }

    if (train_cmd->parsed()) {
        RunConfig cfg = tr_cfg.resolve();
        echo_config("train", cfg, cat(" data=", tr_data, " dev=", tr_dev, " threads=", tr_threads,
                                      " bypass_retrieval=", tr_bypass ? "true" : "false",
                                      " out=", tr_out));
        auto train_ds = load_dataset(tr_data);
        Dataset dev_ds = tr_dev.empty() ? Dataset{} : load_dataset(tr_dev);
        Dataset all = train_ds;
        all.insert(all.end(), dev_ds.begin(), dev_ds.end());
        auto world = prepare_world(all, cfg, tr_kg, tr_threads, tr_bypass);
        std::vector<PreparedExample> prep_train(world.prepared.begin(),
                                                world.prepared.begin() + long(train_ds.size()));
        std::vector<PreparedExample> prep_dev(world.prepared.begin() + long(train_ds.size()),
                                              world.prepared.end());

        auto mp = build_model<float>(cfg, world.vocab.size(), world.registry.size(),
                                     world.registry.n_relations);
        std::ofstream metrics;
        if (!tr_metrics.empty()) {
            metrics.open(tr_metrics, std::ios::trunc);
            require(metrics.good(), "train: cannot write ", tr_metrics);
        }
        Trainer trainer(mp);
        TrainOptions opts;
        opts.threads = tr_threads;
        opts.on_epoch = [&](const EpochMetrics& em) {
            std::cout << "epoch " << em.epoch << " train_loss " << em.train_loss << " dev_acc "
                      << em.dev_acc << " seconds " << em.seconds << '\n';
            if (metrics.is_open())
                metrics << "{\"epoch\":" << em.epoch << ",\"train_loss\":" << em.train_loss
                        << ",\"dev_acc\":" << em.dev_acc << ",\"seconds\":" << em.seconds
                        << "}\n"
                        << std::flush;
        };
        trainer.fit(prep_train, prep_dev, opts);
        save_model_dir(tr_out, mp, world.vocab, world.registry);
        std::cout << "checkpoint written to " << tr_out << '\n';
        return 0;
    }

    if (eval_cmd->parsed()) {
        auto loaded = load_model_dir(ev_ckpt);
        echo_config("eval", loaded.cfg, cat(" checkpoint=", ev_ckpt, " data=", ev_data,
                                            " threads=", ev_threads, " bypass_retrieval=",
                                            ev_bypass ? "true" : "false"));
        auto ds = load_dataset(ev_data);
        auto kg = maybe_load_kg(ev_kg);
        auto prepared = prepare_dataset(ds, loaded.vocab, loaded.registry,
                                        kg ? &*kg : nullptr, loaded.cfg, ev_threads, ev_bypass);
        TermLists terms;
        auto split_csv = [](const std::string& s, std::vector<std::string>& out) {
            if (s.empty()) return;
            out.clear();
            std::istringstream is(s);
            std::string item;
            while (std::getline(is, item, ','))
                if (!item.empty()) out.push_back(item);
        };
        split_csv(ev_negation, terms.negation);
        split_csv(ev_hedge, terms.hedge);
        split_csv(ev_preps, terms.prepositions);
        auto report = evaluate_dataset(loaded.params, prepared, ds, terms, ev_threads);
        std::string text = report.to_json();
        if (!ev_out.empty()) {
            std::ofstream f(ev_out, std::ios::trunc);
            require(f.good(), "eval: cannot write ", ev_out);
            f << text << '\n';
        }
        std::cout << text << '\n';
        return 0;
    }

    if (gc_cmd->parsed()) {
        RunConfig cfg;
        if (!gc_cfg.config_path.empty()) cfg = load_config_file(gc_cfg.config_path);
        for (const auto& kv : gc_cfg.sets) {
            size_t eq = kv.find('=');
            require(eq != std::string::npos, "--set expects key=value");
            apply_config_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
        }
        if (gc_cfg.seed) cfg.seed = *gc_cfg.seed;
        echo_config("gradcheck", cfg, cat(" epsilon=", gc_eps, " coords=", gc_coords));
        auto rep = model_grad_check(cfg, gc_eps, gc_coords, cfg.seed);
        std::cout << "max_rel_err " << rep.max_rel_err << " over " << rep.coords_checked
                  << " coordinates\n";
        if (rep.max_rel_err >= 1e-3) {
            std::cerr << "gradcheck failed: " << rep.max_rel_err << " >= 1e-3\n";
            return 2;
        }
        return 0;
    }

    if (trace_cmd->parsed()) {
        auto loaded = load_model_dir(tc_ckpt);
        echo_config("trace", loaded.cfg, cat(" checkpoint=", tc_ckpt, " data=", tc_data,
                                             " example=", tc_example, " bypass_retrieval=",
                                             tc_bypass ? "true" : "false"));
        auto ds = load_dataset(tc_data);
        auto kg = maybe_load_kg(tc_kg);
        const QAExample* target = nullptr;
        if (tc_example.empty()) {
            require(!ds.empty(), "trace: empty dataset");
            target = &ds[0];
        } else {
            for (const auto& ex : ds)
                if (ex.id == tc_example) target = &ex;
            require(target != nullptr, "trace: no example with id '", tc_example, "'");
        }
        auto prep = prepare_example(*target, loaded.vocab, loaded.registry, kg ? &*kg : nullptr,
                                    loaded.cfg, tc_bypass);
        auto result = trace_attention(loaded.params, prep);
        std::string text = trace_to_json(result);
        if (!tc_out.empty()) {
            std::ofstream f(tc_out, std::ios::trunc);
            require(f.good(), "trace: cannot write ", tc_out);
            f << text << '\n';
        }
        std::cout << text << '\n';
        return 0;
    }

    if (ablate_cmd->parsed()) {
        RunConfig cfg = ab_cfg.resolve();
        std::string seed_str;
        for (auto s : ab_seeds) seed_str += cat(" ", s);
        echo_config("ablate", cfg, cat(" data=", ab_train, " dev=", ab_dev, " suite=",
                                       ab_suite.empty() ? "<default>" : ab_suite, " seeds=",
                                       one_line(seed_str), " threads=", ab_threads, " out=",
                                       ab_out));
        auto train_ds = load_dataset(ab_train);
        auto dev_ds = load_dataset(ab_dev);
        auto suite = ab_suite.empty() ? default_ablation_suite() : load_ablation_suite(ab_suite);
        auto results = run_ablation(cfg, suite, train_ds, dev_ds, ab_seeds, ab_threads);
        auto tsv = ablation_report_tsv(results, ab_seeds);
        std::ofstream f(ab_out, std::ios::trunc);
        require(f.good(), "ablate: cannot write ", ab_out);
        f << tsv;
        std::cout << tsv;
        return 0;
    }

    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run_cli(argc, argv);
    } catch (const kgqa::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
