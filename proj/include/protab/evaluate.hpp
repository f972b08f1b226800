#pragma once

// Metric computation, the seed-averaged record store, the ablation grid, and
// the paired significance test used to compare schemes across datasets.

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "protab/common.hpp"
#include "protab/model.hpp"

namespace protab::evaluate {

enum class Variant { full, no_O, no_O_D, baseline };

const char* variant_name(Variant v);
Variant variant_from_name(const std::string& name);

struct MetricRecord {
    std::string dataset;
    std::string backbone;
    std::string variant;
    std::uint64_t seed = 0;
    std::string metric_name;  // "accuracy" or "rmse"
    double value = 0.0;

    std::string key() const;  // identity for idempotent storage
    std::string to_json() const;
    static MetricRecord from_json(const std::string& line);
};

// accuracy = fraction of correct argmax / thresholded-logit decisions;
// rmse is computed in the normalized-label space the model was trained in.
double accuracy(const Mat& predictions, const Vec& labels, Task task);
double rmse(const Mat& predictions, const Vec& labels);

MetricRecord evaluate(const model::ModelBundle& bundle, const data::TabularDataset& test,
                      const std::string& dataset = "", Variant variant = Variant::full,
                      std::uint64_t seed = 0);

// Append-only newline-delimited JSON store; appends are skipped when the
// record key is already present, so re-running a grid is a no-op.
class RecordStore {
   public:
    explicit RecordStore(std::string path);

    const std::vector<MetricRecord>& records() const { return records_; }
    bool contains(const std::string& key) const { return keys_.count(key) > 0; }
    bool append(const MetricRecord& record);  // false when already present

   private:
    std::string path_;
    std::vector<MetricRecord> records_;
    std::set<std::string> keys_;
};

// One pipeline run for a grid cell; supplied by the caller so the grid logic
// stays independent of any concrete trainer wiring.
using RunFn = std::function<MetricRecord(const std::string& preset, const std::string& backbone,
                                         std::uint64_t seed, Variant variant)>;

// Executes preset x backbone x seed x variant, persisting each record as it
// completes; cells already in the store are not re-run.
std::vector<MetricRecord> run_ablation_grid(const std::vector<std::string>& presets,
                                            const std::vector<std::string>& backbones,
                                            const std::vector<std::uint64_t>& seeds,
                                            const std::vector<Variant>& variants,
                                            const RunFn& run, RecordStore& store);

struct SummaryRow {
    std::string dataset = "*";
    std::string backbone = "*";
    std::string variant = "*";
    std::string metric_name = "*";
    int count = 0;
    double mean = 0.0;
    double stddev = 0.0;  // population
};

// group_keys is a subset of {dataset, backbone, variant, metric_name}; rows
// come back sorted by their grouped fields.
std::vector<SummaryRow> aggregate(const std::vector<MetricRecord>& records,
                                  const std::vector<std::string>& group_keys);

std::string summary_csv(const std::vector<SummaryRow>& rows);

// Aligned fixed-width table of the same rows, for terminal reports.
std::string summary_text(const std::vector<SummaryRow>& rows);

// Per dataset, the variant(s) with the best seed-mean get one win each; ties
// credit every tied variant. Direction follows the metric (accuracy up,
// rmse down).
std::map<std::string, int> win_counts(const std::vector<MetricRecord>& records);

struct WilcoxonResult {
    double statistic = 0.0;  // W = min(W+, W-)
    double p_value = 1.0;
    bool reject_at_0_05 = false;
    int n_used = 0;  // pairs surviving zero-difference exclusion
    bool exact = false;
};

// Exact signed-rank distribution (midranks, zero-difference exclusion) for
// n <= 25, normal approximation beyond.
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace protab::evaluate
