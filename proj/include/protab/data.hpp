#pragma once

// Tabular dataset ingestion, preprocessing, and deterministic splits.
//
// A TabularDataset stores every cell as a double; categorical cells hold
// integer codes defined by the schema's category list. Preprocessing is
// strictly fit/apply separated: fit_preprocess reads training rows only and
// the resulting state is an immutable value.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "protab/common.hpp"

namespace protab::data {

enum class ColumnKind { numerical, categorical };

struct ColumnSchema {
    std::string name;
    ColumnKind kind = ColumnKind::numerical;
    // Categorical columns: either an explicit category list (CSV cells hold
    // the strings) or a bare cardinality (cells hold integer codes already).
    std::vector<std::string> categories;
    int declared_cardinality = 0;

    int cardinality() const {
        return categories.empty() ? declared_cardinality
                                  : static_cast<int>(categories.size());
    }
};

struct TabularDataset {
    std::vector<ColumnSchema> schema;
    Mat rows;      // n x |schema|
    Vec labels;    // length n
    Task task = Task::binclass;
    int num_classes = 0;  // classification only

    int n() const { return static_cast<int>(rows.rows()); }
    int width() const { return static_cast<int>(schema.size()); }

    void validate() const;  // throws on any broken invariant
    TabularDataset take(const std::vector<int>& idx) const;
};

// Column views used by the model layer.
std::vector<int> columns_of_kind(const std::vector<ColumnSchema>& schema, ColumnKind kind);
Mat numeric_block(const TabularDataset& ds);                  // n x n_num
std::vector<std::vector<int>> categorical_codes(const TabularDataset& ds);  // per column

struct SplitIndices {
    std::vector<int> train, val, test;
};

// Deterministic 3-way split. Classification splits are stratified by label;
// sizes land within +-1 of n * ratio via a running-deficit quota walk.
SplitIndices split_indices(const TabularDataset& ds, double train_ratio,
                           double val_ratio, double test_ratio, std::uint64_t seed);

struct Splits {
    TabularDataset train, val, test;
    SplitIndices indices;
};

Splits split(const TabularDataset& ds, double train_ratio, double val_ratio,
             double test_ratio, std::uint64_t seed);

std::string split_indices_to_json(const SplitIndices& s);

enum class NumericMode { quantile, standardize };

struct NumericTransform {
    NumericMode mode = NumericMode::quantile;
    bool constant = false;  // fit saw a constant column; transform is identity
    double mean = 0.0;      // standardize
    double stddev = 1.0;
    std::vector<double> knot_values;  // quantile: distinct train values
    std::vector<double> knot_probs;   // midrank probabilities, strictly increasing

    double transform(double x) const;
};

struct PreprocessState {
    std::vector<ColumnSchema> schema;             // fitted-on schema
    std::vector<NumericTransform> numeric;        // per column; unused for categorical
    std::vector<std::map<int, int>> cat_remap;    // train code -> compact index
    bool normalize_labels = false;                // regression only
    double label_mean = 0.0;
    double label_stddev = 1.0;
    std::vector<std::string> warnings;            // constant-column flags etc.

    // Schema after apply: categorical cardinalities become |dict| + 1, the
    // extra slot being the reserved unseen-category index.
    std::vector<ColumnSchema> encoded_schema() const;
};

PreprocessState fit_preprocess(const TabularDataset& train, NumericMode mode);
TabularDataset apply_preprocess(const PreprocessState& state, const TabularDataset& ds);

// CSV loading. The header row must contain every schema column plus the
// target column; extra columns are ignored. Categorical cells may be either
// a declared category string or an integer code below the cardinality.
TabularDataset load_csv(const std::string& path, const std::vector<ColumnSchema>& schema,
                        Task task, const std::string& target_column = "target",
                        int num_classes = 0);
void save_csv(const TabularDataset& ds, const std::string& path,
              const std::string& target_column = "target");

// Schema sidecar (JSON): {"task": ..., "num_classes": ..., "target": ...,
// "preprocess": "quantile"|"standardize", "columns": [{name, kind, ...}]}.
struct DatasetSpec {
    std::vector<ColumnSchema> schema;
    Task task = Task::binclass;
    int num_classes = 0;
    std::string target_column = "target";
    NumericMode preprocess = NumericMode::quantile;
};

DatasetSpec dataset_spec_from_json(const std::string& json_text);
std::string dataset_spec_to_json(const DatasetSpec& spec);

struct SyntheticTruth {
    Vec weights;       // regression generating slope
    double bias = 0.0;
    Mat centers;       // classification blob centers (num_classes x features)
};

// Deterministic test fixtures: Gaussian blobs separated along coordinate 0
// for classification, linear-plus-noise for regression.
TabularDataset make_synthetic(int n, int num_features, Task task, std::uint64_t seed,
                              SyntheticTruth* truth = nullptr, int num_classes = 0,
                              double separation = 3.0, double noise = 0.5);

// Mixed-type fixture exercising the categorical path: `num_cat` integer-coded
// columns whose codes shift the label-generating score.
TabularDataset make_synthetic_mixed(int n, int num_numeric, int num_cat, int cardinality,
                                    Task task, std::uint64_t seed);

}  // namespace protab::data
