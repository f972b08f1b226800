#include "protab/presets.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "protab/pspace.hpp"

namespace protab::presets {

namespace {

// synthetic fixtures are fixed datasets; only the split follows the run seed
constexpr std::uint64_t kSyntheticSeed = 0x5eedULL;

const std::vector<PresetInfo>& registry() {
    static const std::vector<PresetInfo> presets = {
        {"AD", Task::binclass, 2, data::NumericMode::quantile, true, 14},
        {"HI", Task::binclass, 2, data::NumericMode::quantile, true, 28},
        {"HE", Task::multiclass, 100, data::NumericMode::standardize, true, 27},
        {"JA", Task::multiclass, 4, data::NumericMode::quantile, true, 54},
        {"AL", Task::multiclass, 1000, data::NumericMode::standardize, true, 128},
        {"CA", Task::regression, 0, data::NumericMode::quantile, true, 8},
        {"synthetic", Task::binclass, 2, data::NumericMode::quantile, false, 6},
        {"synthetic-reg", Task::regression, 0, data::NumericMode::quantile, false, 6},
    };
    return presets;
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

data::TabularDataset synthesize(const PresetInfo& info) {
    if (info.name == "synthetic") {
        return data::make_synthetic_mixed(1000, 4, 2, 6, Task::binclass, kSyntheticSeed);
    }
    return data::make_synthetic(1200, 6, Task::regression, kSyntheticSeed);
}

}  // namespace

const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> out;
        for (const auto& p : registry()) out.push_back(p.name);
        return out;
    }();
    return names;
}

const PresetInfo& preset_info(const std::string& name) {
    for (const auto& p : registry()) {
        if (p.name == name) return p;
    }
    throw UnknownPreset("unknown preset: " + name);
}

int default_k(const std::string& name) {
    return pspace::choose_k(preset_info(name).feature_count);
}

PresetData load_preset(const std::string& name, std::uint64_t seed,
                       const std::string& data_dir) {
    const PresetInfo& info = preset_info(name);
    data::TabularDataset raw;
    if (info.file_backed) {
        const std::string csv = data_dir + "/" + info.name + ".csv";
        const std::string sidecar = data_dir + "/" + info.name + ".schema.json";
        if (!std::filesystem::exists(csv) || !std::filesystem::exists(sidecar)) {
            throw Error("preset " + info.name + " needs " + csv + " and " + sidecar +
                        "; fetch them on a networked machine with tools/fetch_data.py");
        }
        const data::DatasetSpec spec = data::dataset_spec_from_json(read_text(sidecar));
        if (spec.task != info.task) {
            throw SchemaMismatch("preset " + info.name + ": sidecar task disagrees");
        }
        if (static_cast<int>(spec.schema.size()) != info.feature_count) {
            throw SchemaMismatch("preset " + info.name + ": expected " +
                                 std::to_string(info.feature_count) + " feature columns, got " +
                                 std::to_string(spec.schema.size()));
        }
        raw = data::load_csv(csv, spec.schema, spec.task, spec.target_column, spec.num_classes);
    } else {
        raw = synthesize(info);
    }

    data::Splits splits = data::split(raw, 0.6, 0.2, 0.2, seed);
    PresetData out;
    out.info = info;
    out.indices = splits.indices;
    out.preprocess = data::fit_preprocess(splits.train, info.numeric_mode);
    out.train = data::apply_preprocess(out.preprocess, splits.train);
    out.val = data::apply_preprocess(out.preprocess, splits.val);
    out.test = data::apply_preprocess(out.preprocess, splits.test);
    return out;
}

trainer::TrainConfig apply_variant(trainer::TrainConfig config, evaluate::Variant variant) {
    config.ablation.clear();
    switch (variant) {
        case evaluate::Variant::full: break;
        case evaluate::Variant::no_O:
            config.ablation = {trainer::Ablation::no_orthogonalization};
            break;
        case evaluate::Variant::no_O_D:
            config.ablation = {trainer::Ablation::no_orthogonalization,
                               trainer::Ablation::no_diversifying};
            break;
        case evaluate::Variant::baseline:
            config.ablation = {trainer::Ablation::no_projection};
            break;
    }
    return config;
}

trainer::PipelineResult run_preset_pipeline(const std::string& name,
                                            const model::BackboneSpec& spec,
                                            const trainer::TrainConfig& config,
                                            const std::string& data_dir,
                                            const trainer::TrainHooks& hooks) {
    PresetData ds = load_preset(name, config.seed, data_dir);
    return trainer::run_pipeline(ds.train, ds.val, ds.test, spec, config, hooks);
}

evaluate::RunFn make_grid_runner(const model::BackboneSpec& base_spec,
                                 const trainer::TrainConfig& base_config,
                                 const std::string& data_dir) {
    return [base_spec, base_config, data_dir](const std::string& preset,
                                              const std::string& backbone, std::uint64_t seed,
                                              evaluate::Variant variant) {
        model::BackboneSpec spec = base_spec;
        spec.kind = model::backbone_kind_from_name(backbone);
        trainer::TrainConfig config = apply_variant(base_config, variant);
        config.seed = seed;
        trainer::PipelineResult result =
            run_preset_pipeline(preset, spec, config, data_dir);
        evaluate::MetricRecord record;
        record.dataset = preset;
        record.backbone = backbone;
        record.variant = evaluate::variant_name(variant);
        record.seed = seed;
        record.metric_name = result.report.metric_name;
        record.value = result.report.test_metric;
        return record;
    };
}

}  // namespace protab::presets
