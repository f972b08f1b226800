#include "protab/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace protab::data {

namespace {

using nlohmann::json;

bool parse_double(const std::string& s, double* out) {
    if (s.empty()) return false;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size()) return false;
    *out = v;
    return true;
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(trim(cur));
    return out;
}

}  // namespace

void TabularDataset::validate() const {
    if (n() < 1) throw TooFewRows("dataset has no rows");
    if (rows.cols() != width()) throw SchemaMismatch("row width differs from schema");
    if (labels.size() != rows.rows()) throw ShapeMismatch("labels length differs from rows");
    for (int j = 0; j < width(); ++j) {
        const ColumnSchema& col = schema[static_cast<std::size_t>(j)];
        for (int i = 0; i < n(); ++i) {
            const double v = rows(i, j);
            if (!std::isfinite(v)) {
                throw NonFiniteInput("non-finite cell at row " + std::to_string(i) +
                                     " column " + col.name);
            }
            if (col.kind == ColumnKind::categorical) {
                if (v != std::floor(v) || v < 0 || v >= col.cardinality()) {
                    throw TypeMismatch("categorical code out of range at row " +
                                       std::to_string(i) + " column " + col.name);
                }
            }
        }
    }
    for (int i = 0; i < n(); ++i) {
        if (!std::isfinite(labels[i])) throw NonFiniteInput("non-finite label at row " + std::to_string(i));
        if (task != Task::regression) {
            const int c = task == Task::binclass ? 2 : num_classes;
            if (labels[i] != std::floor(labels[i]) || labels[i] < 0 || labels[i] >= c) {
                throw LabelOutOfRange("label " + std::to_string(labels[i]) + " at row " +
                                      std::to_string(i) + " outside [0," + std::to_string(c) + ")");
            }
        }
    }
}

TabularDataset TabularDataset::take(const std::vector<int>& idx) const {
    TabularDataset out;
    out.schema = schema;
    out.task = task;
    out.num_classes = num_classes;
    out.rows.resize(static_cast<Eigen::Index>(idx.size()), rows.cols());
    out.labels.resize(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= n()) throw ShapeMismatch("take index out of range");
        out.rows.row(static_cast<Eigen::Index>(i)) = rows.row(idx[i]);
        out.labels[static_cast<Eigen::Index>(i)] = labels[idx[i]];
    }
    return out;
}

std::vector<int> columns_of_kind(const std::vector<ColumnSchema>& schema, ColumnKind kind) {
    std::vector<int> out;
    for (std::size_t j = 0; j < schema.size(); ++j) {
        if (schema[j].kind == kind) out.push_back(static_cast<int>(j));
    }
    return out;
}

Mat numeric_block(const TabularDataset& ds) {
    const std::vector<int> cols = columns_of_kind(ds.schema, ColumnKind::numerical);
    Mat out(ds.n(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) {
        out.col(static_cast<Eigen::Index>(j)) = ds.rows.col(cols[j]);
    }
    return out;
}

std::vector<std::vector<int>> categorical_codes(const TabularDataset& ds) {
    const std::vector<int> cols = columns_of_kind(ds.schema, ColumnKind::categorical);
    std::vector<std::vector<int>> out(cols.size());
    for (std::size_t j = 0; j < cols.size(); ++j) {
        out[j].resize(static_cast<std::size_t>(ds.n()));
        for (int i = 0; i < ds.n(); ++i) {
            out[j][static_cast<std::size_t>(i)] = static_cast<int>(ds.rows(i, cols[j]));
        }
    }
    return out;
}

SplitIndices split_indices(const TabularDataset& ds, double train_ratio,
                           double val_ratio, double test_ratio, std::uint64_t seed) {
    const double s = train_ratio + val_ratio + test_ratio;
    if (std::abs(s - 1.0) > 1e-9 || train_ratio <= 0 || val_ratio <= 0 || test_ratio <= 0) {
        throw BadRatios("split ratios must be positive and sum to 1");
    }
    if (ds.n() < 10) throw TooFewRows("need at least 10 rows to split");

    // Group rows: one group per class (stratified), or everything for
    // regression. Within-group order is shuffled; groups are walked in label
    // order through a single running-deficit quota so global sizes stay
    // within +-1 of n * ratio.
    std::vector<std::vector<int>> groups;
    if (ds.task == Task::regression) {
        groups.emplace_back(ds.n());
        std::iota(groups[0].begin(), groups[0].end(), 0);
    } else {
        std::map<int, std::vector<int>> by_label;
        for (int i = 0; i < ds.n(); ++i) by_label[static_cast<int>(ds.labels[i])].push_back(i);
        for (auto& [lbl, idx] : by_label) groups.push_back(std::move(idx));
    }
    Rng rng = Rng::from(seed, 0x5eedULL);
    for (auto& g : groups) rng.shuffle(g);

    const double ratios[3] = {train_ratio, val_ratio, test_ratio};
    SplitIndices out;
    std::vector<int>* dest[3] = {&out.train, &out.val, &out.test};
    long assigned[3] = {0, 0, 0};
    long t = 0;
    for (const auto& g : groups) {
        for (int idx : g) {
            ++t;
            int best = 0;
            double best_deficit = -1e300;
            for (int k = 0; k < 3; ++k) {
                const double deficit = ratios[k] * static_cast<double>(t) -
                                       static_cast<double>(assigned[k]);
                if (deficit > best_deficit + 1e-12) {
                    best_deficit = deficit;
                    best = k;
                }
            }
            dest[best]->push_back(idx);
            ++assigned[best];
        }
    }
    return out;
}

Splits split(const TabularDataset& ds, double train_ratio, double val_ratio,
             double test_ratio, std::uint64_t seed) {
    Splits out;
    out.indices = split_indices(ds, train_ratio, val_ratio, test_ratio, seed);
    out.train = ds.take(out.indices.train);
    out.val = ds.take(out.indices.val);
    out.test = ds.take(out.indices.test);
    return out;
}

std::string split_indices_to_json(const SplitIndices& s) {
    json j;
    j["train"] = s.train;
    j["val"] = s.val;
    j["test"] = s.test;
    return j.dump();
}

double NumericTransform::transform(double x) const {
    if (constant) return x;
    if (mode == NumericMode::standardize) return (x - mean) / stddev;
    // quantile: piecewise-linear interpolation of midrank probabilities over
    // the fitted knots, then the normal quantile. Clamped outside the fitted
    // range, strictly increasing inside it.
    const auto& v = knot_values;
    const auto& p = knot_probs;
    double prob;
    if (x <= v.front()) {
        prob = p.front();
    } else if (x >= v.back()) {
        prob = p.back();
    } else {
        const auto it = std::upper_bound(v.begin(), v.end(), x);
        const std::size_t hi = static_cast<std::size_t>(it - v.begin());
        const std::size_t lo = hi - 1;
        const double w = (x - v[lo]) / (v[hi] - v[lo]);
        prob = p[lo] + w * (p[hi] - p[lo]);
    }
    return normal_quantile(prob);
}

std::vector<ColumnSchema> PreprocessState::encoded_schema() const {
    std::vector<ColumnSchema> out = schema;
    std::size_t cat_at = 0;
    for (auto& col : out) {
        if (col.kind == ColumnKind::categorical) {
            col.categories.clear();
            col.declared_cardinality =
                static_cast<int>(cat_remap[cat_at].size()) + 1;  // +1 reserved unseen slot
            ++cat_at;
        }
    }
    return out;
}

PreprocessState fit_preprocess(const TabularDataset& train, NumericMode mode) {
    if (train.n() < 1) throw TooFewRows("fit_preprocess needs a nonempty training set");
    PreprocessState st;
    st.schema = train.schema;
    st.numeric.resize(train.schema.size());

    constexpr int kMaxKnots = 1000;
    for (int j = 0; j < train.width(); ++j) {
        const ColumnSchema& col = train.schema[static_cast<std::size_t>(j)];
        if (col.kind == ColumnKind::categorical) {
            std::map<int, int> remap;
            for (int i = 0; i < train.n(); ++i) {
                remap.emplace(static_cast<int>(train.rows(i, j)), 0);
            }
            int next = 0;
            for (auto& [code, compact] : remap) compact = next++;
            st.cat_remap.push_back(std::move(remap));
            continue;
        }
        NumericTransform tr;
        tr.mode = mode;
        std::vector<double> vals(static_cast<std::size_t>(train.n()));
        for (int i = 0; i < train.n(); ++i) vals[static_cast<std::size_t>(i)] = train.rows(i, j);
        std::sort(vals.begin(), vals.end());
        if (vals.front() == vals.back()) {
            tr.constant = true;
            st.warnings.push_back("constant column passes through unchanged: " + col.name);
            st.numeric[static_cast<std::size_t>(j)] = std::move(tr);
            continue;
        }
        if (mode == NumericMode::standardize) {
            const double n = static_cast<double>(vals.size());
            double mean = 0.0;
            for (double v : vals) mean += v;
            mean /= n;
            double var = 0.0;
            for (double v : vals) var += (v - mean) * (v - mean);
            tr.mean = mean;
            tr.stddev = std::sqrt(var / n);  // population std
        } else {
            // Distinct values with midrank probabilities (a + b) / 2m for the
            // occurrence range [a, b); strictly increasing by construction.
            const double m = static_cast<double>(vals.size());
            std::vector<double> kv, kp;
            std::size_t a = 0;
            while (a < vals.size()) {
                std::size_t b = a;
                while (b < vals.size() && vals[b] == vals[a]) ++b;
                kv.push_back(vals[a]);
                kp.push_back((static_cast<double>(a) + static_cast<double>(b)) / (2.0 * m));
                a = b;
            }
            if (static_cast<int>(kv.size()) > kMaxKnots) {
                std::vector<double> sv, sp;
                sv.reserve(kMaxKnots);
                sp.reserve(kMaxKnots);
                const std::size_t last = kv.size() - 1;
                for (int i = 0; i < kMaxKnots; ++i) {
                    const std::size_t at = static_cast<std::size_t>(
                        std::llround(static_cast<double>(i) * static_cast<double>(last) /
                                     (kMaxKnots - 1)));
                    sv.push_back(kv[at]);
                    sp.push_back(kp[at]);
                }
                kv = std::move(sv);
                kp = std::move(sp);
            }
            tr.knot_values = std::move(kv);
            tr.knot_probs = std::move(kp);
        }
        st.numeric[static_cast<std::size_t>(j)] = std::move(tr);
    }

    if (train.task == Task::regression) {
        st.normalize_labels = true;
        const double n = static_cast<double>(train.n());
        st.label_mean = train.labels.mean();
        double var = 0.0;
        for (int i = 0; i < train.n(); ++i) {
            var += (train.labels[i] - st.label_mean) * (train.labels[i] - st.label_mean);
        }
        st.label_stddev = std::sqrt(var / n);
        if (st.label_stddev == 0.0) {
            st.label_stddev = 1.0;
            st.warnings.push_back("constant labels: normalization is a shift only");
        }
    }
    return st;
}

TabularDataset apply_preprocess(const PreprocessState& state, const TabularDataset& ds) {
    if (ds.schema.size() != state.schema.size()) {
        throw SchemaMismatch("column count differs from fitted state");
    }
    for (std::size_t j = 0; j < ds.schema.size(); ++j) {
        if (ds.schema[j].name != state.schema[j].name || ds.schema[j].kind != state.schema[j].kind) {
            throw SchemaMismatch("column " + std::to_string(j) + " differs from fitted state");
        }
    }
    TabularDataset out;
    out.schema = state.encoded_schema();
    out.task = ds.task;
    out.num_classes = ds.num_classes;
    out.rows = ds.rows;
    out.labels = ds.labels;
    std::size_t cat_at = 0;
    for (int j = 0; j < ds.width(); ++j) {
        if (ds.schema[static_cast<std::size_t>(j)].kind == ColumnKind::categorical) {
            const auto& remap = state.cat_remap[cat_at];
            const int unseen = static_cast<int>(remap.size());
            for (int i = 0; i < ds.n(); ++i) {
                const auto it = remap.find(static_cast<int>(ds.rows(i, j)));
                out.rows(i, j) = it == remap.end() ? unseen : it->second;
            }
            ++cat_at;
        } else {
            const NumericTransform& tr = state.numeric[static_cast<std::size_t>(j)];
            for (int i = 0; i < ds.n(); ++i) out.rows(i, j) = tr.transform(ds.rows(i, j));
        }
    }
    if (state.normalize_labels && ds.task == Task::regression) {
        out.labels = (ds.labels.array() - state.label_mean) / state.label_stddev;
    }
    out.validate();
    return out;
}

TabularDataset load_csv(const std::string& path, const std::vector<ColumnSchema>& schema,
                        Task task, const std::string& target_column, int num_classes) {
    std::ifstream f(path);
    if (!f) throw Error("cannot open " + path);
    std::string line;
    if (!std::getline(f, line)) throw EmptyFile(path + " is empty");
    const std::vector<std::string> header = split_line(line);

    std::vector<int> col_at(schema.size(), -1);
    int target_at = -1;
    for (std::size_t h = 0; h < header.size(); ++h) {
        if (header[h] == target_column) target_at = static_cast<int>(h);
        for (std::size_t j = 0; j < schema.size(); ++j) {
            if (header[h] == schema[j].name) col_at[j] = static_cast<int>(h);
        }
    }
    if (target_at < 0) throw MissingColumn("target column '" + target_column + "' not in header");
    for (std::size_t j = 0; j < schema.size(); ++j) {
        if (col_at[j] < 0) throw MissingColumn("column '" + schema[j].name + "' not in header");
    }

    std::vector<std::vector<double>> parsed;
    std::vector<double> labels;
    int row = 0;
    while (std::getline(f, line)) {
        if (trim(line).empty()) continue;
        const std::vector<std::string> cells = split_line(line);
        std::vector<double> vals(schema.size());
        for (std::size_t j = 0; j < schema.size(); ++j) {
            if (static_cast<std::size_t>(col_at[j]) >= cells.size()) {
                throw TypeMismatch("row " + std::to_string(row) + " is short of column " +
                                   schema[j].name);
            }
            const std::string& cell = cells[static_cast<std::size_t>(col_at[j])];
            const ColumnSchema& col = schema[j];
            if (col.kind == ColumnKind::numerical) {
                double v;
                if (!parse_double(cell, &v) || !std::isfinite(v)) {
                    throw TypeMismatch("row " + std::to_string(row) + " column " + col.name +
                                       ": '" + cell + "' is not numeric");
                }
                vals[j] = v;
            } else {
                int code = -1;
                if (!col.categories.empty()) {
                    const auto it = std::find(col.categories.begin(), col.categories.end(), cell);
                    if (it != col.categories.end()) {
                        code = static_cast<int>(it - col.categories.begin());
                    }
                }
                if (code < 0) {
                    double v;
                    if (parse_double(cell, &v) && v == std::floor(v) && v >= 0 &&
                        v < col.cardinality()) {
                        code = static_cast<int>(v);
                    }
                }
                if (code < 0) {
                    throw TypeMismatch("row " + std::to_string(row) + " column " + col.name +
                                       ": unknown category '" + cell + "'");
                }
                vals[j] = code;
            }
        }
        const std::string& lcell = cells[static_cast<std::size_t>(target_at)];
        double lv;
        if (!parse_double(lcell, &lv) || !std::isfinite(lv)) {
            throw TypeMismatch("row " + std::to_string(row) + " target: '" + lcell +
                               "' is not numeric");
        }
        parsed.push_back(std::move(vals));
        labels.push_back(lv);
        ++row;
    }
    if (parsed.empty()) throw EmptyFile(path + " has a header but no data rows");

    TabularDataset ds;
    ds.schema = schema;
    ds.task = task;
    ds.rows.resize(static_cast<Eigen::Index>(parsed.size()),
                   static_cast<Eigen::Index>(schema.size()));
    ds.labels.resize(static_cast<Eigen::Index>(labels.size()));
    for (std::size_t i = 0; i < parsed.size(); ++i) {
        for (std::size_t j = 0; j < schema.size(); ++j) {
            ds.rows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = parsed[i][j];
        }
        ds.labels[static_cast<Eigen::Index>(i)] = labels[i];
    }
    if (task == Task::multiclass) {
        ds.num_classes = num_classes > 0
                             ? num_classes
                             : static_cast<int>(ds.labels.maxCoeff()) + 1;
    } else if (task == Task::binclass) {
        ds.num_classes = 2;
    }
    ds.validate();
    return ds;
}

void save_csv(const TabularDataset& ds, const std::string& path,
              const std::string& target_column) {
    std::ofstream f(path);
    if (!f) throw Error("cannot write " + path);
    for (const auto& col : ds.schema) f << col.name << ",";
    f << target_column << "\n";
    f.precision(17);
    for (int i = 0; i < ds.n(); ++i) {
        for (int j = 0; j < ds.width(); ++j) {
            const ColumnSchema& col = ds.schema[static_cast<std::size_t>(j)];
            if (col.kind == ColumnKind::categorical && !col.categories.empty()) {
                f << col.categories[static_cast<std::size_t>(ds.rows(i, j))];
            } else {
                f << ds.rows(i, j);
            }
            f << ",";
        }
        f << ds.labels[i] << "\n";
    }
}

DatasetSpec dataset_spec_from_json(const std::string& json_text) {
    const json j = json::parse(json_text);
    DatasetSpec spec;
    spec.task = task_from_name(j.at("task").get<std::string>());
    spec.num_classes = j.value("num_classes", spec.task == Task::binclass ? 2 : 0);
    spec.target_column = j.value("target", std::string("target"));
    const std::string mode = j.value("preprocess", std::string("quantile"));
    if (mode == "quantile") {
        spec.preprocess = NumericMode::quantile;
    } else if (mode == "standardize") {
        spec.preprocess = NumericMode::standardize;
    } else {
        throw Error("unknown preprocess mode: " + mode);
    }
    for (const auto& c : j.at("columns")) {
        ColumnSchema col;
        col.name = c.at("name").get<std::string>();
        const std::string kind = c.at("kind").get<std::string>();
        if (kind == "numerical") {
            col.kind = ColumnKind::numerical;
        } else if (kind == "categorical") {
            col.kind = ColumnKind::categorical;
            if (c.contains("categories")) {
                col.categories = c["categories"].get<std::vector<std::string>>();
            }
            col.declared_cardinality = c.value("cardinality", 0);
            if (col.cardinality() < 1) {
                throw Error("categorical column " + col.name + " needs categories or cardinality");
            }
        } else {
            throw Error("unknown column kind: " + kind);
        }
        spec.schema.push_back(std::move(col));
    }
    // duplicate names break the header mapping
    for (std::size_t a = 0; a < spec.schema.size(); ++a) {
        for (std::size_t b = a + 1; b < spec.schema.size(); ++b) {
            if (spec.schema[a].name == spec.schema[b].name) {
                throw Error("duplicate column name: " + spec.schema[a].name);
            }
        }
    }
    return spec;
}

std::string dataset_spec_to_json(const DatasetSpec& spec) {
    json j;
    j["task"] = task_name(spec.task);
    if (spec.task != Task::regression) j["num_classes"] = spec.num_classes;
    j["target"] = spec.target_column;
    j["preprocess"] = spec.preprocess == NumericMode::quantile ? "quantile" : "standardize";
    j["columns"] = json::array();
    for (const auto& col : spec.schema) {
        json c;
        c["name"] = col.name;
        c["kind"] = col.kind == ColumnKind::numerical ? "numerical" : "categorical";
        if (col.kind == ColumnKind::categorical) {
            if (!col.categories.empty()) {
                c["categories"] = col.categories;
            } else {
                c["cardinality"] = col.declared_cardinality;
            }
        }
        j["columns"].push_back(std::move(c));
    }
    return j.dump(2);
}

TabularDataset make_synthetic(int n, int num_features, Task task, std::uint64_t seed,
                              SyntheticTruth* truth, int num_classes, double separation,
                              double noise) {
    if (n < 4) throw TooFewRows("synthetic fixture needs n >= 4");
    if (num_features < 1) throw IncompatibleSpec("synthetic fixture needs >= 1 feature");
    TabularDataset ds;
    ds.task = task;
    ds.schema.resize(static_cast<std::size_t>(num_features));
    for (int j = 0; j < num_features; ++j) {
        ds.schema[static_cast<std::size_t>(j)].name = "x" + std::to_string(j);
    }
    ds.rows.resize(n, num_features);
    ds.labels.resize(n);

    Rng feat = Rng::from(seed, 1ULL);
    Rng par = Rng::from(seed, 2ULL);

    if (task == Task::regression) {
        Vec w(num_features);
        for (int j = 0; j < num_features; ++j) w[j] = par.uniform(-2.0, 2.0);
        const double b = par.uniform(-1.0, 1.0);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < num_features; ++j) ds.rows(i, j) = feat.gaussian();
            ds.labels[i] = ds.rows.row(i).dot(w) + b + noise * feat.gaussian();
        }
        if (truth) {
            truth->weights = w;
            truth->bias = b;
        }
    } else {
        const int c = num_classes > 0 ? num_classes : (task == Task::binclass ? 2 : 3);
        ds.num_classes = c;
        Mat centers = Mat::Zero(c, num_features);
        for (int k = 0; k < c; ++k) {
            // separated along coordinate 0 only, so a single-feature threshold
            // separates blobs by construction
            centers(k, 0) = (k - (c - 1) / 2.0) * separation;
        }
        for (int i = 0; i < n; ++i) {
            const int y = i % c;
            ds.labels[i] = y;
            for (int j = 0; j < num_features; ++j) {
                ds.rows(i, j) = centers(y, j) + feat.gaussian();
            }
        }
        if (truth) truth->centers = centers;
    }
    ds.validate();
    return ds;
}

TabularDataset make_synthetic_mixed(int n, int num_numeric, int num_cat, int cardinality,
                                    Task task, std::uint64_t seed) {
    if (n < 4) throw TooFewRows("synthetic fixture needs n >= 4");
    if (cardinality < 2) throw IncompatibleSpec("mixed fixture needs cardinality >= 2");
    TabularDataset ds;
    ds.task = task;
    for (int j = 0; j < num_numeric; ++j) {
        ColumnSchema col;
        col.name = "x" + std::to_string(j);
        ds.schema.push_back(col);
    }
    for (int j = 0; j < num_cat; ++j) {
        ColumnSchema col;
        col.name = "c" + std::to_string(j);
        col.kind = ColumnKind::categorical;
        col.declared_cardinality = cardinality;
        ds.schema.push_back(col);
    }
    const int width = num_numeric + num_cat;
    ds.rows.resize(n, width);
    ds.labels.resize(n);
    Rng rng = Rng::from(seed, 3ULL);
    Rng par = Rng::from(seed, 4ULL);
    Vec w(num_numeric);
    for (int j = 0; j < num_numeric; ++j) w[j] = par.uniform(-1.5, 1.5);
    Mat cat_effect(num_cat, cardinality);
    for (int j = 0; j < num_cat; ++j) {
        for (int v = 0; v < cardinality; ++v) cat_effect(j, v) = par.uniform(-1.0, 1.0);
    }
    for (int i = 0; i < n; ++i) {
        double score = 0.0;
        for (int j = 0; j < num_numeric; ++j) {
            ds.rows(i, j) = rng.gaussian();
            score += w[j] * ds.rows(i, j);
        }
        for (int j = 0; j < num_cat; ++j) {
            const int v = static_cast<int>(rng.below(static_cast<std::size_t>(cardinality)));
            ds.rows(i, num_numeric + j) = v;
            score += cat_effect(j, v);
        }
        if (task == Task::regression) {
            ds.labels[i] = score + 0.3 * rng.gaussian();
        } else {
            const int c = task == Task::binclass ? 2 : 3;
            ds.num_classes = c;
            // map the score through quantile-free thresholds at 0 (binary) or
            // +-0.7 (3-way); noisy but learnable
            if (c == 2) {
                ds.labels[i] = score + 0.3 * rng.gaussian() > 0.0 ? 1.0 : 0.0;
            } else {
                const double s = score + 0.3 * rng.gaussian();
                ds.labels[i] = s < -0.7 ? 0.0 : (s < 0.7 ? 1.0 : 2.0);
            }
        }
    }
    ds.validate();
    return ds;
}

}  // namespace protab::data
