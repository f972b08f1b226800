#pragma once

// Model bundles: the backbone/head split F = head(backbone(x)) plus the
// shared coordinates estimator and (after phase 1) the prototype matrix.
// Three backbone shapes are provided: a plain MLP, a residual stack, and a
// toy single-block feature-token attention model (per-feature tokens plus a
// readout token). Parameters are named tensors initialized with uniform
// fan-in bounds, deterministic under the bundle seed.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "protab/data.hpp"
#include "protab/nn.hpp"
#include "protab/pspace.hpp"

namespace protab::model {

enum class BackboneKind { mlp, residual, feature_token_attention };
enum class Activation { relu, tanh };

const char* backbone_kind_name(BackboneKind k);
BackboneKind backbone_kind_from_name(const std::string& name);

struct BackboneSpec {
    BackboneKind kind = BackboneKind::mlp;
    int depth = 3;          // hidden blocks (mlp / residual); attention uses one block
    int hidden_dim = 64;    // representation width d
    int embedding_dim = 8;  // categorical / token width
    Activation activation = Activation::relu;
    double dropout = 0.0;

    void validate(const std::vector<data::ColumnSchema>& schema) const;
};

struct ParamTensor {
    std::string name;
    Mat value;
};

struct ParamSet {
    std::vector<ParamTensor> tensors;

    int scalar_count() const;
    const Mat& at(const std::string& name) const;
};

struct ModelBundle {
    BackboneSpec spec;
    std::vector<data::ColumnSchema> schema;  // encoded (post-preprocess) schema
    Task task = Task::binclass;
    int num_classes = 0;
    std::uint64_t seed = 0;

    ParamSet backbone;            // theta_f
    ParamSet head;                // theta_h
    pspace::Estimator estimator;  // gamma
    std::optional<pspace::PrototypeSpace> prototypes;  // absent in phase 1

    int rep_dim() const { return spec.hidden_dim; }
    int head_out() const { return task == Task::multiclass ? num_classes : 1; }
    int prototype_count() const { return estimator.k(); }
};

// k = 0 picks ceil(ln(feature count)) with the floor of 2; num_classes is
// ignored outside multiclass.
ModelBundle build_model(const BackboneSpec& spec, const std::vector<data::ColumnSchema>& schema,
                        Task task, std::uint64_t seed, int num_classes = 0, int k = 0);

// Fresh theta_f, theta_h, gamma from the new seed (identical to building with
// that seed); the prototype matrix is carried over bit-exactly.
ModelBundle reinitialize(const ModelBundle& bundle, std::uint64_t seed);

// A dense minibatch view of preprocessed rows.
struct Batch {
    Mat x_num;                            // n_b x n_num
    std::vector<std::vector<int>> x_cat;  // per categorical column, length n_b
    Vec y;

    int n() const { return static_cast<int>(y.size()); }
    static Batch gather(const data::TabularDataset& ds, const std::vector<int>& rows);
    static Batch all(const data::TabularDataset& ds);
};

// Tape-bound parameter handles, parallel to ParamSet::tensors.
struct Binding {
    std::vector<nn::Value> values;
};
Binding bind(nn::Tape& tape, const ParamSet& params);

// Training-path forwards. Dropout only fires when train_mode and the spec
// says so; rng must outlive the call when it can fire.
nn::Value forward_backbone(nn::Tape& tape, const ModelBundle& bundle, const Binding& theta_f,
                           const Batch& batch, bool train_mode = false, Rng* dropout_rng = nullptr);
nn::Value forward_head(nn::Tape& tape, const ModelBundle& bundle, const Binding& theta_h,
                       nn::Value reps);

// Eval-mode conveniences (no dropout, fresh internal tape).
Mat forward_backbone(const ModelBundle& bundle, const data::TabularDataset& ds);
Mat forward_head(const ModelBundle& bundle, const Mat& reps);

// Full prediction for evaluation: phase-2 bundles (prototypes present) route
// the head through the projection sum_k r_k beta_k, phase-1 bundles through
// the raw representation.
Mat predict(const ModelBundle& bundle, const data::TabularDataset& ds);

// Versioned JSON checkpoints; round-trips are bit-exact for finite doubles.
void save_checkpoint(const ModelBundle& bundle, const std::string& path);
ModelBundle load_checkpoint(const std::string& path);

}  // namespace protab::model
