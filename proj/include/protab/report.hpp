#pragma once

// Figure generation and the run manifest. Every plot writes an SVG and a
// numeric CSV twin; the CSV is the record, the image a derived view.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "protab/common.hpp"
#include "protab/pspace.hpp"

namespace protab::report {

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::string& path);

struct ManifestEntry {
    std::string path;  // relative to the manifest's output_dir
    std::string sha256;
    std::uint64_t bytes = 0;
};

struct RunManifest {
    std::string command;
    std::string config_path;
    std::string config_snapshot;  // resolved config, serialized
    std::string inputs_hash;      // content hash over the run's inputs
    std::string created_utc;
    std::string output_dir;
    std::vector<ManifestEntry> outputs;

    // hashes output_dir/relative_path and records it
    void add_file(const std::string& relative_path);
    std::string to_json() const;
    static RunManifest from_json(const std::string& text);
    void write() const;  // output_dir/manifest.json, not listed in itself
};

enum class Reduction { pca, tsne_external };

const char* reduction_name(Reduction r);
Reduction reduction_from_name(const std::string& name);

// Centered projection onto the top-2 principal components; columns beyond the
// input rank come back zero. Deterministic: component signs are fixed by the
// largest-magnitude loading.
Mat reduce_2d(const Mat& reps, Reduction method = Reduction::pca);

struct PlotResult {
    std::string svg_path;
    std::string csv_path;
};

// 2-D scatter colored by label; CSV twin holds x,y,label rows.
PlotResult plot_embeddings(const Mat& reps, const Vec& labels, const std::string& out_base,
                           Reduction method = Reduction::pca);

// Per-class mean-coordinate bar panels plus the difference of the first two
// classes; CSV twin holds one row per class and a final difference row.
PlotResult plot_coordinate_means(const Mat& coords, const Vec& labels,
                                 const std::string& out_base);

// K x K heatmap of |cos(beta_i, beta_j)|; CSV twin is the raw matrix.
PlotResult plot_prototype_similarity(const pspace::PrototypeSpace& space,
                                     const std::string& out_base);

struct SweepPoint {
    int k = 0;
    double mean = 0.0;
    double stddev = 0.0;  // population, across seeds
    int runs = 0;
};

struct SweepResult {
    std::vector<SweepPoint> points;
    int default_k = 0;  // marked on the plot
    PlotResult plot;
};

// One pipeline run at a given prototype count; supplied by the caller so the
// sweep stays independent of any concrete trainer wiring.
using SweepRunFn = std::function<double(int k, std::uint64_t seed)>;

// Metric-vs-K curve with per-K seed means; K values must be >= 1 and sorted.
SweepResult sweep_prototype_count(const std::vector<int>& k_values,
                                  const std::vector<std::uint64_t>& seeds, int default_k,
                                  const SweepRunFn& run, const std::string& out_base,
                                  const std::string& metric_label = "metric");

}  // namespace protab::report
