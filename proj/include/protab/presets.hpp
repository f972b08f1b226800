#pragma once

// Dataset preset registry: the benchmark-suite names (file-backed, fetched
// separately into data/) plus in-process synthetic fixtures, and the glue
// that turns a preset name into pipeline runs for the ablation grid.

#include <cstdint>
#include <string>
#include <vector>

#include "protab/data.hpp"
#include "protab/evaluate.hpp"
#include "protab/trainer.hpp"

namespace protab::presets {

struct PresetInfo {
    std::string name;
    Task task = Task::binclass;
    int num_classes = 0;  // 0 for regression
    data::NumericMode numeric_mode = data::NumericMode::quantile;
    bool file_backed = false;
    int feature_count = 0;  // raw columns; sets the default prototype count
};

const std::vector<std::string>& preset_names();
const PresetInfo& preset_info(const std::string& name);  // UnknownPreset
int default_k(const std::string& name);                  // choose_k(feature_count)

struct PresetData {
    PresetInfo info;
    data::TabularDataset train, val, test;  // preprocessed, 6:2:2
    data::PreprocessState preprocess;
    data::SplitIndices indices;  // raw-row indices behind each split, for audit
};

// File-backed presets read data_dir/<NAME>.csv + <NAME>.schema.json; the
// split (and nothing about the data itself) depends on seed.
PresetData load_preset(const std::string& name, std::uint64_t seed,
                       const std::string& data_dir = "data");

// Maps a reporting variant onto the trainer's ablation switches.
trainer::TrainConfig apply_variant(trainer::TrainConfig config, evaluate::Variant variant);

trainer::PipelineResult run_preset_pipeline(const std::string& name,
                                            const model::BackboneSpec& spec,
                                            const trainer::TrainConfig& config,
                                            const std::string& data_dir = "data",
                                            const trainer::TrainHooks& hooks = {});

// Grid cell runner: backbone name overrides the base spec's kind, seed and
// variant override the base config.
evaluate::RunFn make_grid_runner(const model::BackboneSpec& base_spec,
                                 const trainer::TrainConfig& base_config,
                                 const std::string& data_dir = "data");

}  // namespace protab::presets
