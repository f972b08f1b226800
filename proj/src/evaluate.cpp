#include "protab/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <array>
#include <cstring>

#include "json.hpp"

namespace protab::evaluate {

namespace {

using nlohmann::json;

double population_std(const std::vector<double>& xs, double mean) {
    double acc = 0.0;
    for (double x : xs) acc += (x - mean) * (x - mean);
    return std::sqrt(acc / static_cast<double>(xs.size()));
}

}  // namespace

const char* variant_name(Variant v) {
    switch (v) {
        case Variant::full: return "full";
        case Variant::no_O: return "no_O";
        case Variant::no_O_D: return "no_O_D";
        case Variant::baseline: return "baseline";
    }
    return "?";
}

Variant variant_from_name(const std::string& name) {
    if (name == "full") return Variant::full;
    if (name == "no_O") return Variant::no_O;
    if (name == "no_O_D") return Variant::no_O_D;
    if (name == "baseline") return Variant::baseline;
    throw IncompatibleSpec("unknown variant: " + name);
}

std::string MetricRecord::key() const {
    return dataset + "|" + backbone + "|" + variant + "|" + std::to_string(seed) + "|" +
           metric_name;
}

std::string MetricRecord::to_json() const {
    json j{{"dataset", dataset}, {"backbone", backbone}, {"variant", variant},
           {"seed", seed},       {"metric", metric_name}, {"value", value}};
    return j.dump();
}

MetricRecord MetricRecord::from_json(const std::string& line) {
    json j = json::parse(line);
    MetricRecord r;
    r.dataset = j.at("dataset").get<std::string>();
    r.backbone = j.at("backbone").get<std::string>();
    r.variant = j.at("variant").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.metric_name = j.at("metric").get<std::string>();
    r.value = j.at("value").get<double>();
    return r;
}

double accuracy(const Mat& predictions, const Vec& labels, Task task) {
    if (task == Task::regression) throw IncompatibleSpec("accuracy needs a classification task");
    if (predictions.rows() != labels.size()) throw ShapeMismatch("accuracy: size mismatch");
    if (predictions.rows() == 0) throw ShapeMismatch("accuracy: empty batch");
    int correct = 0;
    for (Eigen::Index i = 0; i < predictions.rows(); ++i) {
        int pick = 0;
        if (task == Task::binclass) {
            pick = predictions(i, 0) > 0.0 ? 1 : 0;
        } else {
            predictions.row(i).maxCoeff(&pick);
        }
        if (static_cast<double>(pick) == labels[i]) correct += 1;
    }
    return static_cast<double>(correct) / static_cast<double>(predictions.rows());
}

double rmse(const Mat& predictions, const Vec& labels) {
    if (predictions.cols() != 1 || predictions.rows() != labels.size()) {
        throw ShapeMismatch("rmse: expects n x 1 predictions");
    }
    if (predictions.rows() == 0) throw ShapeMismatch("rmse: empty batch");
    return std::sqrt((predictions.col(0) - labels).squaredNorm() /
                     static_cast<double>(labels.size()));
}

MetricRecord evaluate(const model::ModelBundle& bundle, const data::TabularDataset& test,
                      const std::string& dataset, Variant variant, std::uint64_t seed) {
    if (test.schema.size() != bundle.schema.size()) {
        throw SchemaMismatch("evaluate: dataset width differs from the model schema");
    }
    for (std::size_t i = 0; i < test.schema.size(); ++i) {
        if (test.schema[i].name != bundle.schema[i].name ||
            test.schema[i].kind != bundle.schema[i].kind) {
            throw SchemaMismatch("evaluate: column " + test.schema[i].name +
                                 " differs from the model schema");
        }
    }
    Mat pred = model::predict(bundle, test);
    MetricRecord r;
    r.dataset = dataset;
    r.backbone = model::backbone_kind_name(bundle.spec.kind);
    r.variant = variant_name(variant);
    r.seed = seed;
    if (bundle.task == Task::regression) {
        r.metric_name = "rmse";
        r.value = rmse(pred, test.labels);
    } else {
        r.metric_name = "accuracy";
        r.value = accuracy(pred, test.labels, bundle.task);
    }
    return r;
}

RecordStore::RecordStore(std::string path) : path_(std::move(path)) {
    std::ifstream in(path_);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        MetricRecord r = MetricRecord::from_json(line);
        if (keys_.insert(r.key()).second) records_.push_back(std::move(r));
    }
}

bool RecordStore::append(const MetricRecord& record) {
    if (!keys_.insert(record.key()).second) return false;
    records_.push_back(record);
    std::ofstream out(path_, std::ios::app);
    if (!out) throw Error("cannot append to record store " + path_);
    out << record.to_json() << "\n";
    out.flush();
    return true;
}

std::vector<MetricRecord> run_ablation_grid(const std::vector<std::string>& presets,
                                            const std::vector<std::string>& backbones,
                                            const std::vector<std::uint64_t>& seeds,
                                            const std::vector<Variant>& variants,
                                            const RunFn& run, RecordStore& store) {
    std::vector<MetricRecord> produced;
    for (const auto& preset : presets) {
        for (const auto& backbone : backbones) {
            for (std::uint64_t seed : seeds) {
                for (Variant variant : variants) {
                    MetricRecord probe;
                    probe.dataset = preset;
                    probe.backbone = backbone;
                    probe.variant = variant_name(variant);
                    probe.seed = seed;
                    probe.metric_name = "accuracy";
                    std::string alt_key = probe.key();
                    probe.metric_name = "rmse";
                    if (store.contains(alt_key) || store.contains(probe.key())) continue;
                    MetricRecord record = run(preset, backbone, seed, variant);
                    store.append(record);
                    produced.push_back(std::move(record));
                }
            }
        }
    }
    return produced;
}

std::vector<SummaryRow> aggregate(const std::vector<MetricRecord>& records,
                                  const std::vector<std::string>& group_keys) {
    if (records.empty()) throw EmptyGroup("aggregate: no records");
    bool by_dataset = false, by_backbone = false, by_variant = false, by_metric = false;
    for (const auto& k : group_keys) {
        if (k == "dataset") by_dataset = true;
        else if (k == "backbone") by_backbone = true;
        else if (k == "variant") by_variant = true;
        else if (k == "metric_name") by_metric = true;
        else throw Error("aggregate: unknown group key " + k);
    }
    std::map<std::string, std::pair<SummaryRow, std::vector<double>>> groups;
    for (const auto& r : records) {
        SummaryRow row;
        if (by_dataset) row.dataset = r.dataset;
        if (by_backbone) row.backbone = r.backbone;
        if (by_variant) row.variant = r.variant;
        if (by_metric) row.metric_name = r.metric_name;
        const std::string key =
            row.dataset + "|" + row.backbone + "|" + row.variant + "|" + row.metric_name;
        auto& slot = groups[key];
        slot.first = row;
        slot.second.push_back(r.value);
    }
    std::vector<SummaryRow> out;
    for (auto& [key, slot] : groups) {
        SummaryRow row = slot.first;
        row.count = static_cast<int>(slot.second.size());
        row.mean = std::accumulate(slot.second.begin(), slot.second.end(), 0.0) /
                   static_cast<double>(slot.second.size());
        row.stddev = population_std(slot.second, row.mean);
        out.push_back(std::move(row));
    }
    return out;
}

std::string summary_csv(const std::vector<SummaryRow>& rows) {
    std::ostringstream out;
    out << "dataset,backbone,variant,metric,count,mean,stddev\n";
    out.precision(17);
    for (const auto& r : rows) {
        out << r.dataset << ',' << r.backbone << ',' << r.variant << ',' << r.metric_name << ','
            << r.count << ',' << r.mean << ',' << r.stddev << "\n";
    }
    return out.str();
}

std::string summary_text(const std::vector<SummaryRow>& rows) {
    const char* header[7] = {"dataset", "backbone", "variant", "metric", "n", "mean", "std"};
    std::vector<std::array<std::string, 7>> cells;
    for (const auto& r : rows) {
        char mean[32], stddev[32];
        std::snprintf(mean, sizeof(mean), "%.4f", r.mean);
        std::snprintf(stddev, sizeof(stddev), "%.4f", r.stddev);
        cells.push_back({r.dataset, r.backbone, r.variant, r.metric_name,
                         std::to_string(r.count), mean, stddev});
    }
    std::array<std::size_t, 7> width{};
    for (int c = 0; c < 7; ++c) width[static_cast<std::size_t>(c)] = std::strlen(header[c]);
    for (const auto& row : cells) {
        for (int c = 0; c < 7; ++c) {
            width[static_cast<std::size_t>(c)] =
                std::max(width[static_cast<std::size_t>(c)], row[static_cast<std::size_t>(c)].size());
        }
    }
    std::ostringstream out;
    const auto emit = [&](const std::array<std::string, 7>& row) {
        for (int c = 0; c < 7; ++c) {
            out << row[static_cast<std::size_t>(c)];
            if (c < 6) {
                out << std::string(width[static_cast<std::size_t>(c)] -
                                       row[static_cast<std::size_t>(c)].size() + 2,
                                   ' ');
            }
        }
        out << "\n";
    };
    emit({header[0], header[1], header[2], header[3], header[4], header[5], header[6]});
    for (const auto& row : cells) emit(row);
    return out.str();
}

std::map<std::string, int> win_counts(const std::vector<MetricRecord>& records) {
    if (records.empty()) throw EmptyGroup("win_counts: no records");
    // dataset -> variant -> values
    std::map<std::string, std::map<std::string, std::vector<double>>> table;
    std::map<std::string, bool> higher_better;
    std::set<std::string> all_variants;
    for (const auto& r : records) {
        table[r.dataset][r.variant].push_back(r.value);
        higher_better[r.dataset] = r.metric_name != "rmse";
        all_variants.insert(r.variant);
    }
    std::map<std::string, int> wins;
    for (const auto& v : all_variants) wins[v] = 0;
    for (const auto& [dataset, by_variant] : table) {
        const bool up = higher_better[dataset];
        double best = up ? -std::numeric_limits<double>::infinity()
                         : std::numeric_limits<double>::infinity();
        std::map<std::string, double> means;
        for (const auto& [variant, values] : by_variant) {
            const double m = std::accumulate(values.begin(), values.end(), 0.0) /
                             static_cast<double>(values.size());
            means[variant] = m;
            best = up ? std::max(best, m) : std::min(best, m);
        }
        for (const auto& [variant, m] : means) {
            if (m == best) wins[variant] += 1;  // ties credit every tied scheme
        }
    }
    return wins;
}

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ShapeMismatch("wilcoxon: length mismatch");
    std::vector<double> diffs;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        if (d != 0.0) diffs.push_back(d);
    }
    const int n = static_cast<int>(diffs.size());
    if (n < 5) throw TooFewPairs("wilcoxon: fewer than 5 nonzero differences");

    // midranks of |d|, in doubled units so ties stay integral
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int i, int j) {
        return std::abs(diffs[static_cast<std::size_t>(i)]) <
               std::abs(diffs[static_cast<std::size_t>(j)]);
    });
    std::vector<long long> rank2(static_cast<std::size_t>(n));
    int i = 0;
    while (i < n) {
        int j = i;
        while (j + 1 < n && std::abs(diffs[static_cast<std::size_t>(order[static_cast<std::size_t>(j + 1)])]) ==
                                std::abs(diffs[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])])) {
            ++j;
        }
        const long long sum2 = static_cast<long long>(i + 1 + j + 1);  // 2 * midrank
        for (int t = i; t <= j; ++t) rank2[static_cast<std::size_t>(order[static_cast<std::size_t>(t)])] = sum2;
        i = j + 1;
    }

    long long wpos2 = 0, wneg2 = 0;
    for (int t = 0; t < n; ++t) {
        (diffs[static_cast<std::size_t>(t)] > 0.0 ? wpos2 : wneg2) += rank2[static_cast<std::size_t>(t)];
    }
    WilcoxonResult res;
    res.n_used = n;
    res.statistic = static_cast<double>(std::min(wpos2, wneg2)) / 2.0;

    if (n <= 25) {
        res.exact = true;
        // subset-sum counts of the doubled ranks: P(W+ <= w)
        const long long total2 = wpos2 + wneg2;
        std::vector<double> count(static_cast<std::size_t>(total2) + 1, 0.0);
        count[0] = 1.0;
        for (int t = 0; t < n; ++t) {
            const long long r2 = rank2[static_cast<std::size_t>(t)];
            for (long long s = total2; s >= r2; --s) {
                count[static_cast<std::size_t>(s)] += count[static_cast<std::size_t>(s - r2)];
            }
        }
        const long long w2 = std::min(wpos2, wneg2);
        double below = 0.0;
        for (long long s = 0; s <= w2; ++s) below += count[static_cast<std::size_t>(s)];
        res.p_value = std::min(1.0, 2.0 * below / std::pow(2.0, n));
    } else {
        // normal approximation with tie correction
        const double nn = static_cast<double>(n);
        const double mean = nn * (nn + 1.0) / 4.0;
        double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0;
        std::map<long long, int> tie_sizes;
        for (int t = 0; t < n; ++t) tie_sizes[rank2[static_cast<std::size_t>(t)]] += 1;
        for (const auto& [r2, c] : tie_sizes) {
            if (c > 1) var -= static_cast<double>(c) * (c * c - 1.0) / 48.0;
        }
        const double w = static_cast<double>(std::min(wpos2, wneg2)) / 2.0;
        const double z = (w - mean) / std::sqrt(var);
        const double phi = 0.5 * std::erfc(-z / std::sqrt(2.0));
        res.p_value = std::min(1.0, 2.0 * phi);
    }
    res.reject_at_0_05 = res.p_value <= 0.05;
    return res;
}

}  // namespace protab::evaluate
