#include "protab/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "json.hpp"

namespace protab::trainer {

namespace {

using nlohmann::json;

class Adam {
   public:
    Adam(std::vector<Mat*> params, double lr) : params_(std::move(params)), lr_(lr) {
        m_.reserve(params_.size());
        v_.reserve(params_.size());
        for (const Mat* p : params_) {
            m_.push_back(Mat::Zero(p->rows(), p->cols()));
            v_.push_back(Mat::Zero(p->rows(), p->cols()));
        }
    }

    void step(const std::vector<Mat>& grads) {
        t_ += 1;
        const double bc1 = 1.0 - std::pow(kBeta1, t_);
        const double bc2 = 1.0 - std::pow(kBeta2, t_);
        for (std::size_t i = 0; i < params_.size(); ++i) {
            const Mat& g = grads[i];
            m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * g;
            v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * g.cwiseProduct(g);
            const Mat mhat = m_[i] / bc1;
            const Mat vhat = v_[i] / bc2;
            *params_[i] -=
                (lr_ * mhat.array() / (vhat.array().sqrt() + kEps)).matrix();
        }
    }

    std::size_t size() const { return params_.size(); }

   private:
    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-8;

    std::vector<Mat*> params_;
    double lr_ = 0.0;
    std::vector<Mat> m_, v_;
    long long t_ = 0;
};

void clip_global_norm(std::vector<Mat>& grads, double max_norm) {
    if (max_norm <= 0.0) return;
    double sq = 0.0;
    for (const Mat& g : grads) sq += g.squaredNorm();
    const double norm = std::sqrt(sq);
    if (norm <= max_norm) return;
    const double scale = max_norm / norm;
    for (Mat& g : grads) g *= scale;
}

double now_seconds() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

struct TermStats {
    double task = 0.0, projecting = 0.0, diversifying = 0.0, orthogonalization = 0.0,
           total = 0.0;
    int steps = 0;
};

// Snapshot of everything the optimizer mutates, for best-epoch restoration.
struct ParamSnapshot {
    model::ParamSet backbone, head;
    pspace::Estimator estimator;
    Mat prototypes;
    bool has_prototypes = false;

    static ParamSnapshot take(const model::ModelBundle& b) {
        ParamSnapshot s;
        s.backbone = b.backbone;
        s.head = b.head;
        s.estimator = b.estimator;
        if (b.prototypes) {
            s.prototypes = b.prototypes->b;
            s.has_prototypes = true;
        }
        return s;
    }

    void restore(model::ModelBundle& b) const {
        b.backbone = backbone;
        b.head = head;
        b.estimator = estimator;
        if (has_prototypes) b.prototypes->b = prototypes;
    }
};

std::vector<std::vector<int>> epoch_batches(int n, int batch_size, Rng& rng) {
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    std::vector<std::vector<int>> batches;
    for (int start = 0; start < n; start += batch_size) {
        const int len = std::min(batch_size, n - start);
        batches.emplace_back(perm.begin() + start, perm.begin() + start + len);
    }
    return batches;
}

[[noreturn]] void diverged(const char* phase, int step, const TermStats& last) {
    throw DivergedLoss(std::string(phase) + " objective became non-finite at step " +
                       std::to_string(step) + " (task=" + std::to_string(last.task) +
                       ", projecting=" + std::to_string(last.projecting) +
                       ", diversifying=" + std::to_string(last.diversifying) +
                       ", orthogonalization=" + std::to_string(last.orthogonalization) + ")");
}

PhaseResult run_phase(const data::TabularDataset& train, const data::TabularDataset& val,
                      model::ModelBundle bundle, const TrainConfig& config,
                      const TrainHooks& hooks, bool phase2) {
    config.validate();
    const Task task = bundle.task;
    const losses::LossWeights weights = config.effective_weights();
    losses::DiversifyingOptions div_opts;
    div_opts.sample_fraction = config.sample_fraction;
    div_opts.exclude_self = config.exclude_self_pairs;

    std::vector<Mat*> params;
    for (auto& t : bundle.backbone.tensors) params.push_back(&t.value);
    for (auto& t : bundle.head.tensors) params.push_back(&t.value);
    if (phase2) {
        params.push_back(&bundle.estimator.w1);
        params.push_back(&bundle.estimator.b1);
        params.push_back(&bundle.estimator.w2);
        params.push_back(&bundle.estimator.b2);
        params.push_back(&bundle.estimator.w3);
        params.push_back(&bundle.estimator.b3);
        params.push_back(&bundle.prototypes->b);
    }
    Adam adam(params, config.learning_rate);

    const std::uint64_t phase_tag = phase2 ? 2u : 1u;
    Rng dropout_rng = Rng::from(config.seed, 0xd707ULL, phase_tag);
    const int max_epochs = phase2 ? config.max_epochs_phase2 : config.max_epochs_phase1;

    PhaseReport report;
    ParamSnapshot best = ParamSnapshot::take(bundle);
    double best_val = std::numeric_limits<double>::quiet_NaN();
    int since_best = 0;
    int global_step = 0;
    const double t0 = now_seconds();

    for (int epoch = 0; epoch < max_epochs; ++epoch) {
        Rng shuffle_rng = Rng::from(config.seed, 0xba7cULL, phase_tag,
                                    static_cast<std::uint64_t>(epoch));
        TermStats stats;
        for (const auto& rows :
             epoch_batches(train.n(), config.batch_size, shuffle_rng)) {
            model::Batch batch = model::Batch::gather(train, rows);
            nn::Tape tape;
            model::Binding bf = model::bind(tape, bundle.backbone);
            model::Binding bh = model::bind(tape, bundle.head);
            nn::Value z = model::forward_backbone(tape, bundle, bf, batch, true, &dropout_rng);

            StepRecord rec;
            rec.step = global_step;
            nn::Value total;
            std::vector<nn::Value> leaves = bf.values;
            leaves.insert(leaves.end(), bh.values.begin(), bh.values.end());

            if (!phase2) {
                nn::Value out = model::forward_head(tape, bundle, bh, z);
                nn::Value l_task = losses::task_loss(tape, out, batch.y, task);
                total = weights.w_task == 1.0 ? l_task : tape.scale(l_task, weights.w_task);
                rec.task = tape.val(l_task)(0, 0);
            } else {
                pspace::EstimatorValues ev{tape.leaf(bundle.estimator.w1),
                                           tape.leaf(bundle.estimator.b1),
                                           tape.leaf(bundle.estimator.w2),
                                           tape.leaf(bundle.estimator.b2),
                                           tape.leaf(bundle.estimator.w3),
                                           tape.leaf(bundle.estimator.b3)};
                nn::Value proto = tape.leaf(bundle.prototypes->b);
                nn::Value zin = config.detach_coords_input ? tape.detach(z) : z;
                nn::Value r = pspace::estimate_coordinates(tape, ev, zin);
                if (hooks.on_coordinates) hooks.on_coordinates(tape.val(r));

                nn::Value out =
                    model::forward_head(tape, bundle, bh, tape.matmul(r, proto));
                nn::Value l_task = losses::task_loss(tape, out, batch.y, task);
                nn::Value l_proj =
                    losses::projecting_loss(tape, z, ev, proto, config.detach_coords_input);
                nn::Value l_div = tape.leaf(Mat::Zero(1, 1));
                if (batch.n() >= 2 && weights.w_diversifying > 0.0) {
                    losses::PairSpec pairs =
                        losses::make_pairs(batch.y, task, config.bin_log_base);
                    const std::uint64_t div_seed = hash_combine(
                        hash_combine(config.seed, static_cast<std::uint64_t>(epoch)),
                        static_cast<std::uint64_t>(stats.steps));
                    l_div = losses::diversifying_loss(tape, r, pairs, div_seed, div_opts).value;
                }
                nn::Value l_orth = losses::orthogonalization_loss(tape, proto);
                total = losses::total_objective(tape, l_task, l_proj, l_div, l_orth, weights);

                rec.task = tape.val(l_task)(0, 0);
                rec.projecting = tape.val(l_proj)(0, 0);
                rec.diversifying = tape.val(l_div)(0, 0);
                rec.orthogonalization = tape.val(l_orth)(0, 0);
                leaves.push_back(ev.w1);
                leaves.push_back(ev.b1);
                leaves.push_back(ev.w2);
                leaves.push_back(ev.b2);
                leaves.push_back(ev.w3);
                leaves.push_back(ev.b3);
                leaves.push_back(proto);
            }
            rec.total = tape.val(total)(0, 0);

            stats.task += rec.task;
            stats.projecting += rec.projecting;
            stats.diversifying += rec.diversifying;
            stats.orthogonalization += rec.orthogonalization;
            stats.total += rec.total;
            stats.steps += 1;
            if (!std::isfinite(rec.total)) {
                diverged(phase2 ? "phase 2" : "phase 1", global_step, stats);
            }

            tape.backward(total);
            std::vector<Mat> grads;
            grads.reserve(leaves.size());
            for (nn::Value leaf : leaves) grads.push_back(tape.grad(leaf));
            clip_global_norm(grads, config.grad_clip_norm);
            adam.step(grads);

            if (hooks.on_step) hooks.on_step(rec);
            global_step += 1;
        }

        EpochStats es;
        es.epoch = epoch;
        const double inv = 1.0 / static_cast<double>(std::max(1, stats.steps));
        es.task = stats.task * inv;
        es.projecting = stats.projecting * inv;
        es.diversifying = stats.diversifying * inv;
        es.orthogonalization = stats.orthogonalization * inv;
        es.total = stats.total * inv;
        es.val_metric = validation_metric(bundle, val);
        report.curve.push_back(es);
        report.epochs_run = epoch + 1;

        if (metric_improved(task, es.val_metric, best_val)) {
            best_val = es.val_metric;
            best = ParamSnapshot::take(bundle);
            report.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if (since_best >= config.patience) break;
        }
    }

    best.restore(bundle);
    report.best_val_metric = best_val;
    report.seconds = now_seconds() - t0;
    return {std::move(bundle), std::move(report)};
}

json phase_to_json(const PhaseReport& p) {
    json curve = json::array();
    for (const auto& e : p.curve) {
        curve.push_back(json{{"epoch", e.epoch},
                             {"task", e.task},
                             {"projecting", e.projecting},
                             {"diversifying", e.diversifying},
                             {"orthogonalization", e.orthogonalization},
                             {"total", e.total},
                             {"val_metric", e.val_metric}});
    }
    return json{{"curve", std::move(curve)},
                {"best_val_metric", p.best_val_metric},
                {"best_epoch", p.best_epoch},
                {"epochs_run", p.epochs_run},
                {"seconds", p.seconds}};
}

}  // namespace

const char* ablation_name(Ablation a) {
    switch (a) {
        case Ablation::no_orthogonalization: return "no_orthogonalization";
        case Ablation::no_diversifying: return "no_diversifying";
        case Ablation::no_projection: return "no_projection";
    }
    return "?";
}

Ablation ablation_from_name(const std::string& name) {
    if (name == "no_orthogonalization") return Ablation::no_orthogonalization;
    if (name == "no_diversifying") return Ablation::no_diversifying;
    if (name == "no_projection") return Ablation::no_projection;
    throw IncompatibleSpec("unknown ablation: " + name);
}

void TrainConfig::validate() const {
    if (batch_size < 2) throw IncompatibleSpec("batch_size must be >= 2");
    if (patience < 1) throw IncompatibleSpec("patience must be >= 1");
    if (max_epochs_phase1 < 1 || max_epochs_phase2 < 1) {
        throw IncompatibleSpec("max_epochs must be >= 1");
    }
    if (!(learning_rate > 0.0)) throw IncompatibleSpec("learning_rate must be positive");
    if (grad_clip_norm < 0.0) throw IncompatibleSpec("grad_clip_norm must be >= 0");
    if (!(sample_fraction > 0.0) || sample_fraction > 1.0) {
        throw IncompatibleSpec("sample_fraction must be in (0,1]");
    }
    if (!(bin_log_base > 1.0)) throw IncompatibleSpec("bin_log_base must exceed 1");
    if (k_override < 0) throw IncompatibleSpec("k_override must be >= 0");
    weights.validate();
}

losses::LossWeights TrainConfig::effective_weights() const {
    losses::LossWeights w = weights;
    if (ablation.count(Ablation::no_orthogonalization) > 0) w.w_orthogonalization = 0.0;
    if (ablation.count(Ablation::no_diversifying) > 0) w.w_diversifying = 0.0;
    if (ablation.count(Ablation::no_projection) > 0) {
        w.w_projecting = 0.0;
        w.w_diversifying = 0.0;
        w.w_orthogonalization = 0.0;
    }
    return w;
}

std::string StepRecord::to_json() const {
    json j{{"step", step},
           {"task", task},
           {"projecting", projecting},
           {"diversifying", diversifying},
           {"orthogonalization", orthogonalization},
           {"total", total}};
    return j.dump();
}

std::string report_to_json(const TrainReport& report) {
    json ablations = json::array();
    for (Ablation a : report.config.ablation) ablations.push_back(ablation_name(a));
    json config{{"batch_size", report.config.batch_size},
                {"max_epochs_phase1", report.config.max_epochs_phase1},
                {"max_epochs_phase2", report.config.max_epochs_phase2},
                {"patience", report.config.patience},
                {"learning_rate", report.config.learning_rate},
                {"grad_clip_norm", report.config.grad_clip_norm},
                {"seed", report.config.seed},
                {"weights",
                 {{"task", report.config.weights.w_task},
                  {"projecting", report.config.weights.w_projecting},
                  {"diversifying", report.config.weights.w_diversifying},
                  {"orthogonalization", report.config.weights.w_orthogonalization}}},
                {"ablation", std::move(ablations)},
                {"k_override", report.config.k_override},
                {"sample_fraction", report.config.sample_fraction},
                {"bin_log_base", report.config.bin_log_base},
                {"exclude_self_pairs", report.config.exclude_self_pairs},
                {"detach_coords_input", report.config.detach_coords_input}};
    json j{{"phase1", phase_to_json(report.phase1)},
           {"phase2", report.phase2_run ? phase_to_json(report.phase2) : json(nullptr)},
           {"prototype_inertia", report.prototype_inertia},
           {"prototype_histogram", report.prototype_histogram},
           {"metric_name", report.metric_name},
           {"test_metric", report.test_evaluated ? json(report.test_metric) : json(nullptr)},
           {"config", std::move(config)},
           {"checkpoint_phase1", report.checkpoint_phase1},
           {"checkpoint_phase2", report.checkpoint_phase2}};
    return j.dump(2);
}

double validation_metric(const model::ModelBundle& bundle, const data::TabularDataset& ds) {
    Mat pred = model::predict(bundle, ds);
    if (bundle.task == Task::regression) {
        return std::sqrt((pred.col(0) - ds.labels).squaredNorm() /
                         static_cast<double>(ds.labels.size()));
    }
    int correct = 0;
    for (Eigen::Index i = 0; i < pred.rows(); ++i) {
        int pick = 0;
        if (bundle.task == Task::binclass) {
            pick = pred(i, 0) > 0.0 ? 1 : 0;
        } else {
            pred.row(i).maxCoeff(&pick);
        }
        if (static_cast<double>(pick) == ds.labels[i]) correct += 1;
    }
    return static_cast<double>(correct) / static_cast<double>(pred.rows());
}

bool metric_improved(Task task, double candidate, double incumbent) {
    if (std::isnan(incumbent)) return true;
    return task == Task::regression ? candidate < incumbent : candidate > incumbent;
}

PhaseResult train_phase1(const data::TabularDataset& train, const data::TabularDataset& val,
                         model::ModelBundle bundle, const TrainConfig& config,
                         const TrainHooks& hooks) {
    bundle.prototypes.reset();  // phase 1 trains and validates the plain network
    return run_phase(train, val, std::move(bundle), config, hooks, false);
}

PrototypeResult generate_prototypes(const model::ModelBundle& bundle,
                                    const data::TabularDataset& train, int k,
                                    std::uint64_t seed) {
    Mat reps = model::forward_backbone(bundle, train);
    pspace::KMeansResult km = pspace::kmeans(reps, k, seed);
    PrototypeResult out;
    out.space = pspace::init_prototypes(km, seed);
    out.inertia = km.inertia;
    out.histogram = km.histogram();
    return out;
}

PhaseResult train_phase2(const data::TabularDataset& train, const data::TabularDataset& val,
                         model::ModelBundle bundle, const pspace::PrototypeSpace& space,
                         const TrainConfig& config, const TrainHooks& hooks) {
    if (space.k() == 0) throw MissingPrototypes("phase 2 needs a nonempty prototype space");
    space.validate();
    if (space.k() != bundle.estimator.k() || space.d() != bundle.rep_dim()) {
        throw MissingPrototypes("prototype space does not match the bundle (" +
                                std::to_string(space.k()) + "x" + std::to_string(space.d()) +
                                " vs estimator K=" + std::to_string(bundle.estimator.k()) +
                                ", d=" + std::to_string(bundle.rep_dim()) + ")");
    }
    if (config.baseline_only()) {
        // the whole projection mechanism is ablated: plain supervised path
        bundle.prototypes.reset();
        return run_phase(train, val, std::move(bundle), config, hooks, false);
    }
    bundle.prototypes = space;
    return run_phase(train, val, std::move(bundle), config, hooks, true);
}

PipelineResult run_pipeline(const data::TabularDataset& train, const data::TabularDataset& val,
                            const data::TabularDataset& test, const model::BackboneSpec& spec,
                            const TrainConfig& config, const TrainHooks& hooks) {
    config.validate();
    train.validate();
    val.validate();
    test.validate();

    model::ModelBundle initial =
        model::build_model(spec, train.schema, train.task, config.seed, train.num_classes,
                           config.k_override);
    TrainReport report;
    report.config = config;
    report.metric_name = train.task == Task::regression ? "rmse" : "accuracy";

    PhaseResult p1 = train_phase1(train, val, std::move(initial), config, hooks);
    report.phase1 = p1.report;

    if (config.baseline_only()) {
        report.test_metric = validation_metric(p1.bundle, test);
        report.test_evaluated = true;
        return {std::move(p1.bundle), std::move(report)};
    }

    PrototypeResult proto =
        generate_prototypes(p1.bundle, train, p1.bundle.prototype_count(), config.seed);
    report.prototype_inertia = proto.inertia;
    report.prototype_histogram = proto.histogram;

    model::ModelBundle fresh =
        model::reinitialize(p1.bundle, hash_combine(config.seed, 0x9421ULL));
    PhaseResult p2 = train_phase2(train, val, std::move(fresh), proto.space, config, hooks);
    report.phase2 = p2.report;
    report.phase2_run = true;
    report.test_metric = validation_metric(p2.bundle, test);
    report.test_evaluated = true;
    return {std::move(p2.bundle), std::move(report)};
}

}  // namespace protab::trainer
