// Command-line front end: prepare / train / ablate / report / plot / sweep-k.
// Every run takes an exclusive lock on its --out directory and leaves a
// manifest.json hashing all outputs.

#include <unistd.h>

#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "protab/presets.hpp"
#include "protab/report.hpp"

namespace {

using nlohmann::json;
using namespace protab;

struct CliConfig {
    model::BackboneSpec spec;
    trainer::TrainConfig train;
    std::string data_dir = "data";
};

model::Activation activation_from_name(const std::string& name) {
    if (name == "relu") return model::Activation::relu;
    if (name == "tanh") return model::Activation::tanh;
    throw IncompatibleSpec("unknown activation: " + name);
}

const char* activation_name(model::Activation a) {
    return a == model::Activation::relu ? "relu" : "tanh";
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// Every key has a default, so "{}" (or no --config at all) is a valid config.
CliConfig parse_config(const std::string& path) {
    CliConfig cfg;
    if (path.empty()) return cfg;
    const json j = json::parse(read_text(path));
    if (j.contains("backbone")) {
        const json& b = j.at("backbone");
        cfg.spec.kind = model::backbone_kind_from_name(b.value("kind", "mlp"));
        cfg.spec.depth = b.value("depth", cfg.spec.depth);
        cfg.spec.hidden_dim = b.value("hidden_dim", cfg.spec.hidden_dim);
        cfg.spec.embedding_dim = b.value("embedding_dim", cfg.spec.embedding_dim);
        cfg.spec.dropout = b.value("dropout", cfg.spec.dropout);
        cfg.spec.activation = activation_from_name(b.value("activation", "relu"));
    }
    if (j.contains("train")) {
        const json& t = j.at("train");
        trainer::TrainConfig& c = cfg.train;
        c.batch_size = t.value("batch_size", c.batch_size);
        c.max_epochs_phase1 = t.value("max_epochs_phase1", c.max_epochs_phase1);
        c.max_epochs_phase2 = t.value("max_epochs_phase2", c.max_epochs_phase2);
        c.patience = t.value("patience", c.patience);
        c.learning_rate = t.value("learning_rate", c.learning_rate);
        c.grad_clip_norm = t.value("grad_clip_norm", c.grad_clip_norm);
        c.seed = t.value("seed", c.seed);
        c.k_override = t.value("k_override", c.k_override);
        c.sample_fraction = t.value("sample_fraction", c.sample_fraction);
        c.bin_log_base = t.value("bin_log_base", c.bin_log_base);
        c.exclude_self_pairs = t.value("exclude_self_pairs", c.exclude_self_pairs);
        c.detach_coords_input = t.value("detach_coords_input", c.detach_coords_input);
        if (t.contains("weights")) {
            const json& w = t.at("weights");
            c.weights.w_task = w.value("task", c.weights.w_task);
            c.weights.w_projecting = w.value("projecting", c.weights.w_projecting);
            c.weights.w_diversifying = w.value("diversifying", c.weights.w_diversifying);
            c.weights.w_orthogonalization =
                w.value("orthogonalization", c.weights.w_orthogonalization);
        }
        for (const auto& name : t.value("ablation", std::vector<std::string>{})) {
            c.ablation.insert(trainer::ablation_from_name(name));
        }
    }
    cfg.data_dir = j.value("data_dir", cfg.data_dir);
    return cfg;
}

std::string config_snapshot(const CliConfig& cfg) {
    json ablations = json::array();
    for (auto a : cfg.train.ablation) ablations.push_back(trainer::ablation_name(a));
    json j{{"backbone",
            {{"kind", model::backbone_kind_name(cfg.spec.kind)},
             {"depth", cfg.spec.depth},
             {"hidden_dim", cfg.spec.hidden_dim},
             {"embedding_dim", cfg.spec.embedding_dim},
             {"dropout", cfg.spec.dropout},
             {"activation", activation_name(cfg.spec.activation)}}},
           {"train",
            {{"batch_size", cfg.train.batch_size},
             {"max_epochs_phase1", cfg.train.max_epochs_phase1},
             {"max_epochs_phase2", cfg.train.max_epochs_phase2},
             {"patience", cfg.train.patience},
             {"learning_rate", cfg.train.learning_rate},
             {"grad_clip_norm", cfg.train.grad_clip_norm},
             {"seed", cfg.train.seed},
             {"k_override", cfg.train.k_override},
             {"sample_fraction", cfg.train.sample_fraction},
             {"bin_log_base", cfg.train.bin_log_base},
             {"exclude_self_pairs", cfg.train.exclude_self_pairs},
             {"detach_coords_input", cfg.train.detach_coords_input},
             {"weights",
              {{"task", cfg.train.weights.w_task},
               {"projecting", cfg.train.weights.w_projecting},
               {"diversifying", cfg.train.weights.w_diversifying},
               {"orthogonalization", cfg.train.weights.w_orthogonalization}}},
             {"ablation", std::move(ablations)}}},
           {"data_dir", cfg.data_dir}};
    return j.dump(2);
}

std::string resolve_out(const std::string& out) {
    const char* root = std::getenv("PROTAB_OUT_ROOT");
    if (root != nullptr && *root != '\0' && !std::filesystem::path(out).is_absolute()) {
        return std::string(root) + "/" + out;
    }
    return out;
}

// Exclusive per-run lock on the output directory, released on scope exit.
class OutputLock {
   public:
    explicit OutputLock(const std::string& dir) : path_(dir + "/.lock") {
        std::filesystem::create_directories(dir);
        if (std::filesystem::exists(path_)) {
            throw Error("output directory is locked by another run: " + path_);
        }
        std::ofstream lock(path_);
        if (!lock) throw Error("cannot create lock file " + path_);
        lock << "pid " << ::getpid() << "\n";
    }
    ~OutputLock() {
        std::error_code ec;
        std::filesystem::remove(path_, ec);
    }

   private:
    std::string path_;
};

std::string now_utc() {
    const std::time_t t = std::time(nullptr);
    std::tm tm_utc{};
    gmtime_r(&t, &tm_utc);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

report::RunManifest start_manifest(const std::string& command, const std::string& config_path,
                                   const CliConfig& cfg, const std::string& out,
                                   const std::vector<std::string>& inputs) {
    report::RunManifest m;
    m.command = command;
    m.config_path = config_path;
    m.config_snapshot = config_snapshot(cfg);
    std::string joined = m.config_snapshot;
    for (const auto& part : inputs) joined += "\n" + part;
    m.inputs_hash = report::sha256_hex(joined);
    m.created_utc = now_utc();
    m.output_dir = out;
    return m;
}

// file-backed presets contribute their data hashes to the inputs hash
std::vector<std::string> preset_inputs(const std::string& preset, const std::string& data_dir) {
    std::vector<std::string> parts{"preset=" + preset};
    const auto& info = presets::preset_info(preset);
    if (info.file_backed) {
        const std::string csv = data_dir + "/" + info.name + ".csv";
        const std::string sidecar = data_dir + "/" + info.name + ".schema.json";
        if (std::filesystem::exists(csv)) parts.push_back(report::sha256_file(csv));
        if (std::filesystem::exists(sidecar)) parts.push_back(report::sha256_file(sidecar));
    }
    return parts;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    out << content;
}

std::vector<std::uint64_t> seed_range(int n) {
    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < n; ++i) seeds.push_back(static_cast<std::uint64_t>(i));
    return seeds;
}

int cmd_prepare(const std::string& preset, std::uint64_t seed, const std::string& out,
                const std::string& config_path) {
    CliConfig cfg = parse_config(config_path);
    OutputLock lock(out);
    presets::PresetData ds = presets::load_preset(preset, seed, cfg.data_dir);

    data::save_csv(ds.train, out + "/train.csv");
    data::save_csv(ds.val, out + "/val.csv");
    data::save_csv(ds.test, out + "/test.csv");
    json splits{{"train", ds.indices.train}, {"val", ds.indices.val}, {"test", ds.indices.test}};
    write_text_file(out + "/splits.json", splits.dump(2) + "\n");
    json prep{{"numeric_mode",
               ds.info.numeric_mode == data::NumericMode::quantile ? "quantile" : "standardize"},
              {"normalize_labels", ds.preprocess.normalize_labels},
              {"label_mean", ds.preprocess.label_mean},
              {"label_stddev", ds.preprocess.label_stddev},
              {"warnings", ds.preprocess.warnings}};
    write_text_file(out + "/preprocess.json", prep.dump(2) + "\n");

    auto manifest = start_manifest("prepare", config_path, cfg, out,
                                   preset_inputs(preset, cfg.data_dir));
    for (const char* f : {"train.csv", "val.csv", "test.csv", "splits.json", "preprocess.json"}) {
        manifest.add_file(f);
    }
    manifest.write();
    std::cout << "prepared " << preset << " -> " << out << " (train " << ds.train.n() << ", val "
              << ds.val.n() << ", test " << ds.test.n() << ")\n";
    return 0;
}

int cmd_train(const std::string& preset, std::uint64_t seed, const std::string& out,
              const std::string& config_path, const std::string& backbone) {
    CliConfig cfg = parse_config(config_path);
    cfg.train.seed = seed;
    if (!backbone.empty()) cfg.spec.kind = model::backbone_kind_from_name(backbone);
    OutputLock lock(out);

    std::ofstream steps(out + "/steps.ndjson", std::ios::binary);
    if (!steps) throw Error("cannot write " + out + "/steps.ndjson");
    trainer::TrainHooks hooks;
    hooks.on_step = [&steps](const trainer::StepRecord& r) { steps << r.to_json() << "\n"; };

    trainer::PipelineResult result =
        presets::run_preset_pipeline(preset, cfg.spec, cfg.train, cfg.data_dir, hooks);
    steps.close();

    model::save_checkpoint(result.bundle, out + "/checkpoint.json");
    if (result.report.phase2_run) {
        result.report.checkpoint_phase2 = "checkpoint.json";
    } else {
        result.report.checkpoint_phase1 = "checkpoint.json";
    }
    write_text_file(out + "/report.json", trainer::report_to_json(result.report) + "\n");

    auto manifest =
        start_manifest("train", config_path, cfg, out, preset_inputs(preset, cfg.data_dir));
    for (const char* f : {"report.json", "steps.ndjson", "checkpoint.json"}) manifest.add_file(f);
    manifest.write();
    std::cout << "test " << result.report.metric_name << " "
              << (result.report.test_evaluated ? std::to_string(result.report.test_metric) : "n/a")
              << " (" << preset << ", " << model::backbone_kind_name(cfg.spec.kind) << ", seed "
              << seed << ")\n";
    return 0;
}

int cmd_ablate(const std::string& preset, const std::string& backbone, int seeds,
               const std::string& out, const std::string& config_path,
               const std::vector<std::string>& variant_names) {
    CliConfig cfg = parse_config(config_path);
    OutputLock lock(out);

    std::vector<evaluate::Variant> variants;
    for (const auto& name : variant_names) variants.push_back(evaluate::variant_from_name(name));

    evaluate::RecordStore store(out + "/records.ndjson");
    auto runner = presets::make_grid_runner(cfg.spec, cfg.train, cfg.data_dir);
    evaluate::RunFn logged = [&](const std::string& p, const std::string& b, std::uint64_t s,
                                 evaluate::Variant v) {
        std::cout << "running " << p << " / " << b << " / seed " << s << " / "
                  << evaluate::variant_name(v) << "\n";
        return runner(p, b, s, v);
    };
    auto produced = evaluate::run_ablation_grid({preset}, {backbone}, seed_range(seeds), variants,
                                                logged, store);
    std::cout << produced.size() << " new record(s), " << store.records().size()
              << " total in store\n";

    auto rows = evaluate::aggregate(store.records(), {"dataset", "backbone", "variant",
                                                      "metric_name"});
    write_text_file(out + "/summary.csv", evaluate::summary_csv(rows));
    write_text_file(out + "/summary.txt", evaluate::summary_text(rows));
    std::cout << evaluate::summary_text(rows);

    // soft ordering check, logged not asserted
    double full_mean = 0.0, no_od_mean = 0.0;
    bool have_full = false, have_no_od = false;
    for (const auto& r : rows) {
        if (r.metric_name != "accuracy") continue;
        if (r.variant == "full") {
            full_mean = r.mean;
            have_full = true;
        }
        if (r.variant == "no_O_D") {
            no_od_mean = r.mean;
            have_no_od = true;
        }
    }
    if (have_full && have_no_od) {
        std::cout << "soft check mean(full)=" << full_mean << " vs mean(no_O_D)=" << no_od_mean
                  << (full_mean >= no_od_mean ? " (expected ordering holds)"
                                              : " (WARNING: ordering violated)")
                  << "\n";
    }

    auto manifest =
        start_manifest("ablate", config_path, cfg, out, preset_inputs(preset, cfg.data_dir));
    for (const char* f : {"records.ndjson", "summary.csv", "summary.txt"}) manifest.add_file(f);
    manifest.write();
    return 0;
}

int cmd_report(const std::string& records_path, const std::string& out,
               const std::string& config_path) {
    CliConfig cfg = parse_config(config_path);
    OutputLock lock(out);
    evaluate::RecordStore store(records_path);
    if (store.records().empty()) throw EmptyGroup("no records in " + records_path);

    auto rows =
        evaluate::aggregate(store.records(), {"dataset", "backbone", "variant", "metric_name"});
    write_text_file(out + "/summary.csv", evaluate::summary_csv(rows));
    write_text_file(out + "/summary.txt", evaluate::summary_text(rows));

    auto wins = evaluate::win_counts(store.records());
    std::ostringstream wins_csv;
    wins_csv << "variant,wins\n";
    for (const auto& [variant, count] : wins) wins_csv << variant << ',' << count << "\n";
    write_text_file(out + "/wins.csv", wins_csv.str());

    // paired significance: full against each other variant over shared cells
    std::ostringstream sig;
    std::map<std::string, std::map<std::string, double>> by_variant;  // variant -> cell -> value
    for (const auto& r : store.records()) {
        by_variant[r.variant][r.dataset + "|" + r.backbone + "|" + std::to_string(r.seed)] =
            r.value;
    }
    for (const auto& [variant, cells] : by_variant) {
        if (variant == "full" || by_variant.count("full") == 0) continue;
        std::vector<double> a, b;
        for (const auto& [cell, value] : by_variant.at("full")) {
            auto it = cells.find(cell);
            if (it != cells.end()) {
                a.push_back(value);
                b.push_back(it->second);
            }
        }
        sig << "full vs " << variant << ": ";
        try {
            auto w = evaluate::wilcoxon_signed_rank(a, b);
            sig << "W=" << w.statistic << " p=" << w.p_value << " n=" << w.n_used
                << (w.exact ? " (exact)" : " (normal approx)")
                << (w.reject_at_0_05 ? " -> significant at 0.05" : " -> not significant") << "\n";
        } catch (const TooFewPairs& e) {
            sig << "skipped (" << e.what() << ")\n";
        }
    }
    write_text_file(out + "/significance.txt", sig.str());
    std::cout << evaluate::summary_text(rows) << sig.str();

    auto manifest = start_manifest("report", config_path, cfg, out,
                                   {"records=" + records_path,
                                    report::sha256_file(records_path)});
    for (const char* f : {"summary.csv", "summary.txt", "wins.csv", "significance.txt"}) {
        manifest.add_file(f);
    }
    manifest.write();
    return 0;
}

int cmd_plot(const std::string& preset, std::uint64_t seed, const std::string& out,
             const std::string& config_path, const std::string& checkpoint,
             const std::string& method_name) {
    CliConfig cfg = parse_config(config_path);
    cfg.train.seed = seed;
    OutputLock lock(out);
    const report::Reduction method = report::reduction_from_name(method_name);

    presets::PresetData ds = presets::load_preset(preset, seed, cfg.data_dir);
    model::ModelBundle bundle = checkpoint.empty()
                                    ? presets::run_preset_pipeline(preset, cfg.spec, cfg.train,
                                                                   cfg.data_dir)
                                          .bundle
                                    : model::load_checkpoint(checkpoint);

    auto manifest =
        start_manifest("plot", config_path, cfg, out, preset_inputs(preset, cfg.data_dir));

    const Mat reps = model::forward_backbone(bundle, ds.test);
    report::plot_embeddings(reps, ds.test.labels, out + "/embeddings", method);
    manifest.add_file("embeddings.svg");
    manifest.add_file("embeddings.csv");

    if (bundle.prototypes.has_value()) {
        report::plot_prototype_similarity(*bundle.prototypes, out + "/prototype_similarity");
        manifest.add_file("prototype_similarity.svg");
        manifest.add_file("prototype_similarity.csv");
        if (ds.test.task != Task::regression) {
            const Mat coords = pspace::estimate_coordinates(bundle.estimator, reps);
            report::plot_coordinate_means(coords, ds.test.labels, out + "/coordinate_means");
            manifest.add_file("coordinate_means.svg");
            manifest.add_file("coordinate_means.csv");
        } else {
            std::cout << "coordinate-means plot skipped: regression labels have no classes\n";
        }
    } else {
        std::cout << "prototype plots skipped: checkpoint has no prototype space\n";
    }

    manifest.write();
    std::cout << "plots written to " << out << "\n";
    return 0;
}

int cmd_sweep_k(const std::string& preset, const std::string& backbone, int seeds,
                std::vector<int> k_values, const std::string& out,
                const std::string& config_path) {
    CliConfig cfg = parse_config(config_path);
    if (!backbone.empty()) cfg.spec.kind = model::backbone_kind_from_name(backbone);
    OutputLock lock(out);

    report::SweepRunFn run = [&](int k, std::uint64_t seed) {
        trainer::TrainConfig c = cfg.train;
        c.k_override = k;
        c.seed = seed;
        std::cout << "running K=" << k << " seed " << seed << "\n";
        return presets::run_preset_pipeline(preset, cfg.spec, c, cfg.data_dir)
            .report.test_metric;
    };
    const auto& info = presets::preset_info(preset);
    const std::string metric = info.task == Task::regression ? "rmse" : "accuracy";
    auto result = report::sweep_prototype_count(k_values, seed_range(seeds),
                                                presets::default_k(preset), run, out + "/sweep",
                                                metric);

    // plateau soft check per the sweep narrative, logged not asserted
    if (result.points.size() >= 2) {
        const auto& last = result.points.back();
        const auto& prev = result.points[result.points.size() - 2];
        const double noise = std::max({last.stddev, prev.stddev, 1e-6});
        std::cout << "plateau check |" << last.mean << " - " << prev.mean << "| vs 2*"
                  << noise
                  << (std::abs(last.mean - prev.mean) <= 2.0 * noise ? " (stable)"
                                                                     : " (still moving)")
                  << "\n";
    }

    auto manifest =
        start_manifest("sweep-k", config_path, cfg, out, preset_inputs(preset, cfg.data_dir));
    manifest.add_file("sweep.svg");
    manifest.add_file("sweep.csv");
    manifest.write();
    std::cout << "sweep written to " << out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    if (const char* threads = std::getenv("PROTAB_THREADS");
        threads != nullptr && *threads != '\0') {
        Eigen::setNbThreads(std::atoi(threads));
    }

    CLI::App app{"protab: two-phase prototype-space learning for tabular data"};
    app.require_subcommand(1);

    std::string config_path, preset = "synthetic", out = "runs/out", backbone, checkpoint;
    std::string records_path, method = "pca";
    std::uint64_t seed = 0;
    int seeds = 5;
    std::vector<int> k_values{2, 3, 4};
    std::vector<std::string> variant_names{"full", "no_O", "no_O_D", "baseline"};

    auto add_common = [&](CLI::App* sub, bool with_preset = true) {
        sub->add_option("--config", config_path, "JSON config file; empty keys keep defaults");
        sub->add_option("--out", out, "output directory (exclusive per run)");
        if (with_preset) sub->add_option("--preset", preset, "dataset preset name");
    };

    CLI::App* prepare = app.add_subcommand("prepare", "split and preprocess a preset");
    add_common(prepare);
    prepare->add_option("--seed", seed, "split seed");

    CLI::App* train = app.add_subcommand("train", "run the two-phase pipeline once");
    add_common(train);
    train->add_option("--seed", seed, "run seed");
    train->add_option("--backbone", backbone, "mlp | residual | attention");

    CLI::App* ablate = app.add_subcommand("ablate", "run the variant grid");
    add_common(ablate);
    ablate->add_option("--backbone", backbone, "backbone kind")->default_val("mlp");
    ablate->add_option("--seeds", seeds, "number of seeds (0..n-1)");
    ablate->add_option("--variants", variant_names, "subset of full,no_O,no_O_D,baseline")
        ->delimiter(',');

    CLI::App* rep = app.add_subcommand("report", "aggregate a record store");
    add_common(rep, false);
    rep->add_option("--records", records_path, "records.ndjson path")->required();

    CLI::App* plot = app.add_subcommand("plot", "figures for a trained model");
    add_common(plot);
    plot->add_option("--seed", seed, "run seed");
    plot->add_option("--checkpoint", checkpoint, "reuse a saved checkpoint instead of training");
    plot->add_option("--method", method, "2-D reduction: pca | tsne_external");

    CLI::App* sweep = app.add_subcommand("sweep-k", "metric vs prototype count");
    add_common(sweep);
    sweep->add_option("--backbone", backbone, "backbone kind");
    sweep->add_option("--seeds", seeds, "number of seeds (0..n-1)");
    sweep->add_option("--k", k_values, "ascending prototype counts")->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        out = resolve_out(out);
        if (prepare->parsed()) return cmd_prepare(preset, seed, out, config_path);
        if (train->parsed()) return cmd_train(preset, seed, out, config_path, backbone);
        if (ablate->parsed()) {
            return cmd_ablate(preset, backbone, seeds, out, config_path, variant_names);
        }
        if (rep->parsed()) return cmd_report(records_path, out, config_path);
        if (plot->parsed()) return cmd_plot(preset, seed, out, config_path, checkpoint, method);
        if (sweep->parsed()) return cmd_sweep_k(preset, backbone, seeds, k_values, out,
                                                config_path);
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
