#pragma once

// Two-phase training orchestration: supervised pretraining, prototype
// generation by clustering the trained representations, parameter
// re-initialization, and joint phase-2 optimization of theta_f, theta_h,
// gamma, and the prototype matrix under the combined objective.

#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "protab/losses.hpp"
#include "protab/model.hpp"

namespace protab::trainer {

// no_projection disables the whole phase-2 mechanism (the baseline path);
// the other two zero single objective terms.
enum class Ablation { no_orthogonalization, no_diversifying, no_projection };

const char* ablation_name(Ablation a);
Ablation ablation_from_name(const std::string& name);

struct TrainConfig {
    int batch_size = 256;
    int max_epochs_phase1 = 100;
    int max_epochs_phase2 = 100;
    int patience = 16;
    double learning_rate = 1e-3;
    double grad_clip_norm = 1.0;  // global L2 norm across all parameter groups
    std::uint64_t seed = 0;
    losses::LossWeights weights;
    std::set<Ablation> ablation;
    int k_override = 0;  // 0 keeps the feature-count rule
    double sample_fraction = 0.5;
    double bin_log_base = 2.0;
    bool exclude_self_pairs = false;
    bool detach_coords_input = false;

    void validate() const;
    bool baseline_only() const { return ablation.count(Ablation::no_projection) > 0; }
    losses::LossWeights effective_weights() const;
};

struct EpochStats {
    int epoch = 0;
    double task = 0.0;
    double projecting = 0.0;
    double diversifying = 0.0;
    double orthogonalization = 0.0;
    double total = 0.0;
    double val_metric = 0.0;
};

struct PhaseReport {
    std::vector<EpochStats> curve;
    double best_val_metric = 0.0;
    int best_epoch = -1;  // index into curve
    int epochs_run = 0;
    double seconds = 0.0;
};

struct TrainReport {
    PhaseReport phase1;
    PhaseReport phase2;
    bool phase2_run = false;
    double prototype_inertia = 0.0;
    std::vector<int> prototype_histogram;
    std::string metric_name;
    double test_metric = 0.0;
    bool test_evaluated = false;
    TrainConfig config;
    std::string checkpoint_phase1;
    std::string checkpoint_phase2;
};

std::string report_to_json(const TrainReport& report);

struct StepRecord {
    int step = 0;
    double task = 0.0;
    double projecting = 0.0;
    double diversifying = 0.0;
    double orthogonalization = 0.0;
    double total = 0.0;

    std::string to_json() const;
};

// Observation points for logging and for invariant probes; both optional.
struct TrainHooks {
    std::function<void(const StepRecord&)> on_step;
    std::function<void(const Mat&)> on_coordinates;  // phase-2 coordinate batches
};

struct PhaseResult {
    model::ModelBundle bundle;  // best-validation parameters
    PhaseReport report;
};

// Minimizes the plain supervised loss over theta_f, theta_h with Adam,
// early-stopping on the validation metric.
PhaseResult train_phase1(const data::TabularDataset& train, const data::TabularDataset& val,
                         model::ModelBundle bundle, const TrainConfig& config,
                         const TrainHooks& hooks = {});

struct PrototypeResult {
    pspace::PrototypeSpace space;
    double inertia = 0.0;
    std::vector<int> histogram;
};

// Clusters eval-mode train representations of the trained bundle; the
// centroids seed the phase-2 prototype matrix.
PrototypeResult generate_prototypes(const model::ModelBundle& bundle,
                                    const data::TabularDataset& train, int k, std::uint64_t seed);

// Joint minimization of the combined objective over theta_f, theta_h, gamma,
// and the prototype matrix. The bundle is expected re-initialized; the head
// consumes the projection, never the raw representation.
PhaseResult train_phase2(const data::TabularDataset& train, const data::TabularDataset& val,
                         model::ModelBundle bundle, const pspace::PrototypeSpace& space,
                         const TrainConfig& config, const TrainHooks& hooks = {});

struct PipelineResult {
    model::ModelBundle bundle;
    TrainReport report;
};

// Full workflow on preprocessed splits: phase 1, prototype generation,
// re-initialization, phase 2, test evaluation. The no_projection ablation
// stops after phase 1 (the baseline scheme).
PipelineResult run_pipeline(const data::TabularDataset& train, const data::TabularDataset& val,
                            const data::TabularDataset& test, const model::BackboneSpec& spec,
                            const TrainConfig& config, const TrainHooks& hooks = {});

// The validation/early-stopping metric: accuracy (classification, higher is
// better) or rmse (regression, lower is better).
double validation_metric(const model::ModelBundle& bundle, const data::TabularDataset& ds);
bool metric_improved(Task task, double candidate, double incumbent);

}  // namespace protab::trainer
