#include "protab/model.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"

namespace protab::model {

namespace {

using nlohmann::json;

Mat fan_in_uniform(Rng& rng, int rows, int cols, int fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(1, fan_in)));
    Mat m(rows, cols);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(-bound, bound);
    }
    return m;
}

int input_width(const BackboneSpec& spec, const std::vector<data::ColumnSchema>& schema) {
    int n_num = 0, n_cat = 0;
    for (const auto& col : schema) {
        (col.kind == data::ColumnKind::numerical ? n_num : n_cat) += 1;
    }
    return n_num + n_cat * spec.embedding_dim;
}

nn::Value activate(nn::Tape& t, const BackboneSpec& spec, nn::Value v) {
    return spec.activation == Activation::relu ? t.relu(v) : t.tanh_(v);
}

nn::Value maybe_dropout(nn::Tape& t, const BackboneSpec& spec, nn::Value v, bool train_mode,
                        Rng* rng) {
    if (!train_mode || spec.dropout <= 0.0) return v;
    if (!rng) throw Error("dropout requires an rng in train mode");
    return t.dropout(v, spec.dropout, *rng);
}

}  // namespace

const char* backbone_kind_name(BackboneKind k) {
    switch (k) {
        case BackboneKind::mlp: return "mlp";
        case BackboneKind::residual: return "residual";
        case BackboneKind::feature_token_attention: return "feature_token_attention";
    }
    return "?";
}

BackboneKind backbone_kind_from_name(const std::string& name) {
    if (name == "mlp") return BackboneKind::mlp;
    if (name == "residual") return BackboneKind::residual;
    if (name == "feature_token_attention" || name == "attention") {
        return BackboneKind::feature_token_attention;
    }
    throw IncompatibleSpec("unknown backbone kind: " + name);
}

void BackboneSpec::validate(const std::vector<data::ColumnSchema>& schema) const {
    if (depth < 1) throw IncompatibleSpec("backbone depth must be >= 1");
    if (hidden_dim < 1) throw IncompatibleSpec("hidden_dim must be >= 1");
    if (dropout < 0.0 || dropout >= 1.0) throw IncompatibleSpec("dropout must be in [0,1)");
    if (schema.empty()) throw IncompatibleSpec("schema has no feature columns");
    const bool has_cat = !data::columns_of_kind(schema, data::ColumnKind::categorical).empty();
    if ((has_cat || kind == BackboneKind::feature_token_attention) && embedding_dim < 1) {
        throw IncompatibleSpec("embedding_dim must be >= 1 for this spec");
    }
    for (const auto& col : schema) {
        if (col.kind == data::ColumnKind::categorical && col.cardinality() < 1) {
            throw IncompatibleSpec("categorical column " + col.name + " has no cardinality");
        }
    }
}

int ParamSet::scalar_count() const {
    int n = 0;
    for (const auto& t : tensors) n += static_cast<int>(t.value.size());
    return n;
}

const Mat& ParamSet::at(const std::string& name) const {
    for (const auto& t : tensors) {
        if (t.name == name) return t.value;
    }
    throw Error("no parameter tensor named " + name);
}

ModelBundle build_model(const BackboneSpec& spec, const std::vector<data::ColumnSchema>& schema,
                        Task task, std::uint64_t seed, int num_classes, int k) {
    spec.validate(schema);
    if (task == Task::multiclass && num_classes < 2) {
        throw IncompatibleSpec("multiclass needs num_classes >= 2");
    }
    ModelBundle b;
    b.spec = spec;
    b.schema = schema;
    b.task = task;
    b.num_classes = task == Task::binclass ? 2 : num_classes;
    b.seed = seed;

    const int n_feat = static_cast<int>(schema.size());
    const int kk = k > 0 ? k : pspace::choose_k(n_feat);
    const std::vector<int> cat_cols = data::columns_of_kind(schema, data::ColumnKind::categorical);
    const int n_num = n_feat - static_cast<int>(cat_cols.size());
    const int h = spec.hidden_dim;
    const int e = spec.embedding_dim;
    const int in = input_width(spec, schema);

    Rng rng = Rng::from(seed, 0xb11dULL);
    auto push = [](ParamSet& p, const std::string& name, Mat m) {
        p.tensors.push_back(ParamTensor{name, std::move(m)});
    };

    if (spec.kind == BackboneKind::mlp || spec.kind == BackboneKind::residual) {
        for (std::size_t c = 0; c < cat_cols.size(); ++c) {
            const int card = schema[static_cast<std::size_t>(cat_cols[c])].cardinality();
            push(b.backbone, "embed" + std::to_string(c), fan_in_uniform(rng, card, e, e));
        }
        if (spec.kind == BackboneKind::mlp) {
            push(b.backbone, "w0", fan_in_uniform(rng, in, h, in));
            push(b.backbone, "b0", fan_in_uniform(rng, 1, h, in));
            for (int l = 1; l < spec.depth; ++l) {
                push(b.backbone, "w" + std::to_string(l), fan_in_uniform(rng, h, h, h));
                push(b.backbone, "b" + std::to_string(l), fan_in_uniform(rng, 1, h, h));
            }
        } else {
            push(b.backbone, "proj_w", fan_in_uniform(rng, in, h, in));
            push(b.backbone, "proj_b", fan_in_uniform(rng, 1, h, in));
            for (int l = 0; l < spec.depth; ++l) {
                const std::string p = "blk" + std::to_string(l);
                push(b.backbone, p + "_w1", fan_in_uniform(rng, h, h, h));
                push(b.backbone, p + "_b1", fan_in_uniform(rng, 1, h, h));
                push(b.backbone, p + "_w2", fan_in_uniform(rng, h, h, h));
                push(b.backbone, p + "_b2", fan_in_uniform(rng, 1, h, h));
            }
        }
    } else {
        push(b.backbone, "tok_w", fan_in_uniform(rng, n_num, e, 1));
        push(b.backbone, "tok_b", fan_in_uniform(rng, n_num, e, 1));
        for (std::size_t c = 0; c < cat_cols.size(); ++c) {
            const int card = schema[static_cast<std::size_t>(cat_cols[c])].cardinality();
            push(b.backbone, "embed" + std::to_string(c), fan_in_uniform(rng, card, e, e));
        }
        push(b.backbone, "readout", fan_in_uniform(rng, 1, e, e));
        for (const char* nm : {"wq", "wk", "wv"}) {
            push(b.backbone, nm, fan_in_uniform(rng, e, e, e));
            push(b.backbone, std::string("b") + (nm + 1), fan_in_uniform(rng, 1, e, e));
        }
        push(b.backbone, "out_w", fan_in_uniform(rng, e, h, e));
        push(b.backbone, "out_b", fan_in_uniform(rng, 1, h, e));
    }

    const int out = task == Task::multiclass ? num_classes : 1;
    b.head.tensors.push_back(ParamTensor{"head_w", fan_in_uniform(rng, h, out, h)});
    b.head.tensors.push_back(ParamTensor{"head_b", fan_in_uniform(rng, 1, out, h)});

    Rng est_rng = Rng::from(seed, 0xe571ULL);
    b.estimator = pspace::Estimator::init(h, h, kk, est_rng);
    return b;
}

ModelBundle reinitialize(const ModelBundle& bundle, std::uint64_t seed) {
    ModelBundle fresh = build_model(bundle.spec, bundle.schema, bundle.task, seed,
                                    bundle.num_classes, bundle.estimator.k());
    fresh.prototypes = bundle.prototypes;  // carried over bit-exactly
    return fresh;
}

Batch Batch::gather(const data::TabularDataset& ds, const std::vector<int>& rows) {
    Batch b;
    const std::vector<int> num_cols = data::columns_of_kind(ds.schema, data::ColumnKind::numerical);
    const std::vector<int> cat_cols = data::columns_of_kind(ds.schema, data::ColumnKind::categorical);
    b.x_num.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(num_cols.size()));
    b.x_cat.assign(cat_cols.size(), std::vector<int>(rows.size()));
    b.y.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const int r = rows[i];
        if (r < 0 || r >= ds.n()) throw ShapeMismatch("batch row index out of range");
        for (std::size_t j = 0; j < num_cols.size(); ++j) {
            b.x_num(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                ds.rows(r, num_cols[j]);
        }
        for (std::size_t j = 0; j < cat_cols.size(); ++j) {
            b.x_cat[j][i] = static_cast<int>(ds.rows(r, cat_cols[j]));
        }
        b.y[static_cast<Eigen::Index>(i)] = ds.labels[r];
    }
    return b;
}

Batch Batch::all(const data::TabularDataset& ds) {
    std::vector<int> rows(static_cast<std::size_t>(ds.n()));
    std::iota(rows.begin(), rows.end(), 0);
    return gather(ds, rows);
}

Binding bind(nn::Tape& tape, const ParamSet& params) {
    Binding b;
    b.values.reserve(params.tensors.size());
    for (const auto& t : params.tensors) b.values.push_back(tape.leaf(t.value));
    return b;
}

namespace {

// leaf index helpers: binding order mirrors tensor creation order
struct Named {
    const ParamSet* set;
    const Binding* bind;
    nn::Value operator()(const std::string& name) const {
        for (std::size_t i = 0; i < set->tensors.size(); ++i) {
            if (set->tensors[i].name == name) return bind->values[i];
        }
        throw Error("no bound tensor named " + name);
    }
};

nn::Value forward_mlp_like(nn::Tape& t, const ModelBundle& bundle, const Named& p,
                           const Batch& batch, bool train_mode, Rng* rng) {
    const BackboneSpec& spec = bundle.spec;
    std::vector<nn::Value> parts;
    if (batch.x_num.cols() > 0) parts.push_back(t.leaf(batch.x_num));
    for (std::size_t c = 0; c < batch.x_cat.size(); ++c) {
        parts.push_back(t.gather_rows(p("embed" + std::to_string(c)), batch.x_cat[c]));
    }
    nn::Value x = parts.size() == 1 ? parts[0] : t.concat_cols(parts);

    if (spec.kind == BackboneKind::mlp) {
        nn::Value h = x;
        for (int l = 0; l < spec.depth; ++l) {
            const std::string i = std::to_string(l);
            h = activate(t, spec, t.add_row_broadcast(t.matmul(h, p("w" + i)), p("b" + i)));
            h = maybe_dropout(t, spec, h, train_mode, rng);
        }
        return h;
    }
    nn::Value h = t.add_row_broadcast(t.matmul(x, p("proj_w")), p("proj_b"));
    for (int l = 0; l < spec.depth; ++l) {
        const std::string i = "blk" + std::to_string(l);
        nn::Value inner =
            activate(t, spec, t.add_row_broadcast(t.matmul(h, p(i + "_w1")), p(i + "_b1")));
        inner = maybe_dropout(t, spec, inner, train_mode, rng);
        inner = t.add_row_broadcast(t.matmul(inner, p(i + "_w2")), p(i + "_b2"));
        h = t.add(h, inner);
    }
    return activate(t, spec, h);
}

nn::Value forward_attention(nn::Tape& t, const ModelBundle& bundle, const Named& p,
                            const Batch& batch) {
    const BackboneSpec& spec = bundle.spec;
    const int n_b = batch.n();
    const int e = spec.embedding_dim;
    const int n_num = static_cast<int>(batch.x_num.cols());
    const int n_cat = static_cast<int>(batch.x_cat.size());
    const int n_feat = n_num + n_cat;

    // one (n_b x e) token matrix per feature, stacked feature-major, with the
    // learned readout token appended as the final row
    std::vector<nn::Value> stacks;
    for (int f = 0; f < n_num; ++f) {
        nn::Value col = t.leaf(Mat(batch.x_num.col(f)));
        nn::Value tok = t.add_row_broadcast(t.matmul(col, t.slice_rows(p("tok_w"), f, 1)),
                                            t.slice_rows(p("tok_b"), f, 1));
        stacks.push_back(tok);
    }
    for (int c = 0; c < n_cat; ++c) {
        stacks.push_back(t.gather_rows(p("embed" + std::to_string(c)),
                                       batch.x_cat[static_cast<std::size_t>(c)]));
    }
    stacks.push_back(p("readout"));
    nn::Value all = t.vstack(stacks);

    const double inv_sqrt_e = 1.0 / std::sqrt(static_cast<double>(e));
    std::vector<nn::Value> readouts;
    readouts.reserve(static_cast<std::size_t>(n_b));
    for (int i = 0; i < n_b; ++i) {
        std::vector<int> idx(static_cast<std::size_t>(n_feat) + 1);
        for (int f = 0; f < n_feat; ++f) idx[static_cast<std::size_t>(f)] = f * n_b + i;
        idx[static_cast<std::size_t>(n_feat)] = n_feat * n_b;  // shared readout row
        nn::Value m = t.gather_rows(all, idx);
        nn::Value q = t.add_row_broadcast(t.matmul(m, p("wq")), p("bq"));
        nn::Value k = t.add_row_broadcast(t.matmul(m, p("wk")), p("bk"));
        nn::Value v = t.add_row_broadcast(t.matmul(m, p("wv")), p("bv"));
        nn::Value att = t.softmax_rows(t.scale(t.matmul_nt(q, k), inv_sqrt_e));
        nn::Value ctx = t.add(m, t.matmul(att, v));
        readouts.push_back(t.slice_rows(ctx, n_feat, 1));
    }
    nn::Value z = t.vstack(readouts);
    return activate(t, spec, t.add_row_broadcast(t.matmul(z, p("out_w")), p("out_b")));
}

}  // namespace

nn::Value forward_backbone(nn::Tape& tape, const ModelBundle& bundle, const Binding& theta_f,
                           const Batch& batch, bool train_mode, Rng* dropout_rng) {
    if (theta_f.values.size() != bundle.backbone.tensors.size()) {
        throw ShapeMismatch("binding does not match backbone tensors");
    }
    const Named p{&bundle.backbone, &theta_f};
    if (bundle.spec.kind == BackboneKind::feature_token_attention) {
        return forward_attention(tape, bundle, p, batch);
    }
    return forward_mlp_like(tape, bundle, p, batch, train_mode, dropout_rng);
}

nn::Value forward_head(nn::Tape& tape, const ModelBundle& bundle, const Binding& theta_h,
                       nn::Value reps) {
    if (theta_h.values.size() != bundle.head.tensors.size()) {
        throw ShapeMismatch("binding does not match head tensors");
    }
    if (tape.val(reps).cols() != bundle.rep_dim()) {
        throw ShapeMismatch("head expects width-" + std::to_string(bundle.rep_dim()) + " input");
    }
    const Named p{&bundle.head, &theta_h};
    return tape.add_row_broadcast(tape.matmul(reps, p("head_w")), p("head_b"));
}

Mat forward_backbone(const ModelBundle& bundle, const data::TabularDataset& ds) {
    nn::Tape tape;
    Binding theta_f = bind(tape, bundle.backbone);
    return tape.val(forward_backbone(tape, bundle, theta_f, Batch::all(ds), false, nullptr));
}

Mat forward_head(const ModelBundle& bundle, const Mat& reps) {
    nn::Tape tape;
    Binding theta_h = bind(tape, bundle.head);
    return tape.val(forward_head(tape, bundle, theta_h, tape.leaf(reps)));
}

Mat predict(const ModelBundle& bundle, const data::TabularDataset& ds) {
    Mat z = forward_backbone(bundle, ds);
    if (bundle.prototypes) {
        Mat r = pspace::estimate_coordinates(bundle.estimator, z);
        return forward_head(bundle, pspace::project(r, *bundle.prototypes));
    }
    return forward_head(bundle, z);
}

namespace {

json mat_to_json(const Mat& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Mat mat_from_json(const json& j) {
    const auto r = j.size();
    if (r == 0) return Mat(0, 0);
    const auto c = j[0].size();
    Mat m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t k = 0; k < c; ++k) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = j[i][k].get<double>();
    }
    return m;
}

json params_to_json(const ParamSet& p) {
    json j = json::array();
    for (const auto& t : p.tensors) {
        j.push_back(json{{"name", t.name}, {"value", mat_to_json(t.value)}});
    }
    return j;
}

ParamSet params_from_json(const json& j) {
    ParamSet p;
    for (const auto& t : j) {
        p.tensors.push_back(ParamTensor{t.at("name").get<std::string>(),
                                        mat_from_json(t.at("value"))});
    }
    return p;
}

}  // namespace

void save_checkpoint(const ModelBundle& bundle, const std::string& path) {
    json j;
    j["version"] = 1;
    j["kind"] = backbone_kind_name(bundle.spec.kind);
    j["depth"] = bundle.spec.depth;
    j["hidden_dim"] = bundle.spec.hidden_dim;
    j["embedding_dim"] = bundle.spec.embedding_dim;
    j["activation"] = bundle.spec.activation == Activation::relu ? "relu" : "tanh";
    j["dropout"] = bundle.spec.dropout;
    j["task"] = task_name(bundle.task);
    j["num_classes"] = bundle.num_classes;
    j["seed"] = bundle.seed;
    j["schema"] = json::array();
    for (const auto& col : bundle.schema) {
        j["schema"].push_back(json{
            {"name", col.name},
            {"kind", col.kind == data::ColumnKind::numerical ? "numerical" : "categorical"},
            {"cardinality", col.cardinality()}});
    }
    j["backbone"] = params_to_json(bundle.backbone);
    j["head"] = params_to_json(bundle.head);
    j["estimator"] = json{{"w1", mat_to_json(bundle.estimator.w1)},
                          {"b1", mat_to_json(bundle.estimator.b1)},
                          {"w2", mat_to_json(bundle.estimator.w2)},
                          {"b2", mat_to_json(bundle.estimator.b2)},
                          {"w3", mat_to_json(bundle.estimator.w3)},
                          {"b3", mat_to_json(bundle.estimator.b3)}};
    j["prototypes"] = bundle.prototypes ? mat_to_json(bundle.prototypes->b) : json(nullptr);

    std::ofstream f(path);
    if (!f) throw Error("cannot write checkpoint " + path);
    f << j.dump();
}

ModelBundle load_checkpoint(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error("cannot open checkpoint " + path);
    json j = json::parse(f);
    if (j.at("version").get<int>() != 1) throw Error("unsupported checkpoint version");

    ModelBundle b;
    b.spec.kind = backbone_kind_from_name(j.at("kind").get<std::string>());
    b.spec.depth = j.at("depth").get<int>();
    b.spec.hidden_dim = j.at("hidden_dim").get<int>();
    b.spec.embedding_dim = j.at("embedding_dim").get<int>();
    b.spec.activation =
        j.at("activation").get<std::string>() == "relu" ? Activation::relu : Activation::tanh;
    b.spec.dropout = j.at("dropout").get<double>();
    b.task = task_from_name(j.at("task").get<std::string>());
    b.num_classes = j.at("num_classes").get<int>();
    b.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& col : j.at("schema")) {
        data::ColumnSchema c;
        c.name = col.at("name").get<std::string>();
        if (col.at("kind").get<std::string>() == "categorical") {
            c.kind = data::ColumnKind::categorical;
            c.declared_cardinality = col.at("cardinality").get<int>();
        }
        b.schema.push_back(std::move(c));
    }
    b.backbone = params_from_json(j.at("backbone"));
    b.head = params_from_json(j.at("head"));
    const json& e = j.at("estimator");
    b.estimator.w1 = mat_from_json(e.at("w1"));
    b.estimator.b1 = mat_from_json(e.at("b1"));
    b.estimator.w2 = mat_from_json(e.at("w2"));
    b.estimator.b2 = mat_from_json(e.at("b2"));
    b.estimator.w3 = mat_from_json(e.at("w3"));
    b.estimator.b3 = mat_from_json(e.at("b3"));
    if (!j.at("prototypes").is_null()) {
        pspace::PrototypeSpace space;
        space.b = mat_from_json(j.at("prototypes"));
        b.prototypes = std::move(space);
    }
    return b;
}

}  // namespace protab::model
