#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "protab/data.hpp"
#include "protab/report.hpp"

using namespace protab;

namespace {

std::string scratch_dir() {
    auto p = std::filesystem::temp_directory_path() / "protab_report_test";
    std::filesystem::create_directories(p);
    return p.string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::istringstream cs(line);
        std::string cell;
        while (std::getline(cs, cell, ',')) cells.push_back(cell);
        rows.push_back(std::move(cells));
    }
    return rows;
}

// mean silhouette over all points, straight from the definition
double silhouette_oracle(const Mat& xy, const Vec& labels) {
    const int n = static_cast<int>(xy.rows());
    std::map<double, std::vector<int>> clusters;
    for (int i = 0; i < n; ++i) clusters[labels[i]].push_back(i);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        double a = 0.0;
        double b = std::numeric_limits<double>::infinity();
        for (const auto& [label, members] : clusters) {
            double sum = 0.0;
            int count = 0;
            for (int j : members) {
                if (j == i) continue;
                sum += (xy.row(i) - xy.row(j)).norm();
                ++count;
            }
            if (label == labels[i]) {
                a = count > 0 ? sum / count : 0.0;
            } else if (count + 1 > 0) {
                b = std::min(b, sum / static_cast<double>(members.size()));
            }
        }
        total += (b - a) / std::max(a, b);
    }
    return total / n;
}

Mat pairwise_distances(const Mat& x) {
    Mat d(x.rows(), x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (Eigen::Index j = 0; j < x.rows(); ++j) d(i, j) = (x.row(i) - x.row(j)).norm();
    }
    return d;
}

}  // namespace

TEST_CASE("sha256 matches the published test vectors") {
    CHECK(report::sha256_hex("") ==
          "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(report::sha256_hex("abc") ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(report::sha256_hex("abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq") ==
          "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
    CHECK(report::sha256_hex(std::string(1000000, 'a')) ==
          "cdc76e5c9914fb9281a1c7e284d73e67f1809a48a497200e046d39ccc7112cd0");

    const std::string path = scratch_dir() + "/vector.bin";
    std::ofstream(path, std::ios::binary) << "abc";
    CHECK(report::sha256_file(path) == report::sha256_hex("abc"));
    CHECK_THROWS_AS(report::sha256_file(scratch_dir() + "/absent.bin"), Error);
}

TEST_CASE("run manifest lists every output with its content hash") {
    const std::string dir = scratch_dir() + "/manifest_run";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    std::ofstream(dir + "/a.csv") << "k,v\n1,2\n";
    std::ofstream(dir + "/b.svg") << "<svg/>\n";

    report::RunManifest m;
    m.command = "plot";
    m.config_path = "cfg.json";
    m.config_snapshot = "{}";
    m.inputs_hash = report::sha256_hex("inputs");
    m.created_utc = "2026-01-01T00:00:00Z";
    m.output_dir = dir;
    m.add_file("a.csv");
    m.add_file("b.svg");
    REQUIRE(m.outputs.size() == 2);
    CHECK(m.outputs[0].path == "a.csv");
    CHECK(m.outputs[0].sha256 == report::sha256_hex("k,v\n1,2\n"));
    CHECK(m.outputs[0].bytes == 8);

    report::RunManifest back = report::RunManifest::from_json(m.to_json());
    CHECK(back.command == m.command);
    CHECK(back.outputs.size() == 2);
    CHECK(back.outputs[1].sha256 == m.outputs[1].sha256);

    m.write();
    CHECK(std::filesystem::exists(dir + "/manifest.json"));
    auto parsed = report::RunManifest::from_json(slurp(dir + "/manifest.json"));
    CHECK(parsed.inputs_hash == m.inputs_hash);
}

TEST_CASE("pca reduction preserves 2-D geometry and orders variance") {
    Rng rng = Rng::from(11, 1ULL);
    Mat x(40, 2);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        x(i, 0) = rng.uniform(-3.0, 3.0);
        x(i, 1) = rng.uniform(-1.0, 1.0);
    }
    Mat y = report::reduce_2d(x);
    // full-rank 2-D input: a rotation, so pairwise distances survive
    CHECK((pairwise_distances(x) - pairwise_distances(y)).cwiseAbs().maxCoeff() < 1e-9);
    const double v0 = y.col(0).squaredNorm();
    const double v1 = y.col(1).squaredNorm();
    CHECK(v0 >= v1);
    CHECK(y.colwise().mean().cwiseAbs().maxCoeff() < 1e-12);

    Mat y2 = report::reduce_2d(x);
    CHECK(y == y2);  // deterministic, including component signs

    Mat one_dim(5, 1);
    one_dim << 1, 2, 3, 4, 5;
    Mat yo = report::reduce_2d(one_dim);
    CHECK(yo.cols() == 2);
    CHECK(yo.col(1).cwiseAbs().maxCoeff() == 0.0);
    CHECK(yo.col(0).cwiseAbs().maxCoeff() > 0.0);

    // rank-1 data in 3-D collapses to one informative component
    Mat rank1(6, 3);
    for (int i = 0; i < 6; ++i) rank1.row(i) = Eigen::RowVector3d(1.0, 2.0, -1.0) * i;
    Mat yr = report::reduce_2d(rank1);
    CHECK(yr.col(1).cwiseAbs().maxCoeff() < 1e-9);

    CHECK_THROWS_AS(report::reduce_2d(x, report::Reduction::tsne_external), IncompatibleSpec);
    CHECK(report::reduction_from_name("pca") == report::Reduction::pca);
    CHECK_THROWS_AS(report::reduction_from_name("umap"), IncompatibleSpec);
}

TEST_CASE("embedding plot separates the two-blob fixture") {
    data::TabularDataset ds = data::make_synthetic(200, 5, Task::binclass, 3, nullptr, 2, 8.0);
    const std::string base = scratch_dir() + "/embed";
    auto res = report::plot_embeddings(ds.rows, ds.labels, base);
    CHECK(res.svg_path == base + ".svg");
    CHECK(res.csv_path == base + ".csv");

    auto rows = parse_csv(slurp(res.csv_path));
    REQUIRE(rows.size() == 201);  // header + one row per sample
    CHECK(rows[0] == std::vector<std::string>{"x", "y", "label"});
    Mat xy(200, 2);
    Vec lab(200);
    for (int i = 0; i < 200; ++i) {
        xy(i, 0) = std::stod(rows[i + 1][0]);
        xy(i, 1) = std::stod(rows[i + 1][1]);
        lab[i] = std::stod(rows[i + 1][2]);
        CHECK(lab[i] == ds.labels[i]);
    }
    CHECK(silhouette_oracle(xy, lab) > 0.5);

    const std::string svg = slurp(res.svg_path);
    CHECK(svg.find("reduction=pca") != std::string::npos);
    CHECK(svg.find("<circle") != std::string::npos);

    // rerun: the CSV twin is byte-identical
    const std::string csv_before = slurp(res.csv_path);
    report::plot_embeddings(ds.rows, ds.labels, base);
    CHECK(slurp(res.csv_path) == csv_before);

    Mat tiny = ds.rows.topRows(2);
    Vec tl = ds.labels.head(2);
    CHECK_THROWS_AS(report::plot_embeddings(tiny, tl, base), TooFewSamples);
    Vec short_labels = ds.labels.head(100);
    CHECK_THROWS_AS(report::plot_embeddings(ds.rows, short_labels, base), ShapeMismatch);
}

TEST_CASE("coordinate-mean plot reports per-class means and their difference") {
    const std::string base = scratch_dir() + "/coords";

    // class 0 one-hot on k0, class 1 one-hot on k1
    Mat coords = Mat::Zero(6, 4);
    Vec labels(6);
    for (int i = 0; i < 6; ++i) {
        const int c = i % 2;
        labels[i] = c;
        coords(i, c) = 1.0;
    }
    auto res = report::plot_coordinate_means(coords, labels, base);
    auto rows = parse_csv(slurp(res.csv_path));
    REQUIRE(rows.size() == 4);  // header, two classes, difference
    CHECK(rows[0][0] == "label");
    CHECK(rows[3][0] == "difference");
    CHECK(std::stod(rows[3][1]) == 1.0);
    CHECK(std::stod(rows[3][2]) == -1.0);
    CHECK(std::stod(rows[3][3]) == 0.0);
    for (int g = 1; g <= 2; ++g) {
        double sum = 0.0;
        for (int j = 1; j <= 4; ++j) sum += std::stod(rows[g][j]);
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));  // simplex rows average to simplex
    }

    // identical coordinates in both classes: difference row all zeros
    Mat flat = Mat::Constant(4, 3, 1.0 / 3.0);
    Vec two(4);
    two << 0, 1, 0, 1;
    auto res2 = report::plot_coordinate_means(flat, two, scratch_dir() + "/coords_flat");
    auto rows2 = parse_csv(slurp(res2.csv_path));
    for (int j = 1; j <= 3; ++j) CHECK(std::stod(rows2[3][j]) == 0.0);

    Vec ones = Vec::Ones(6);
    CHECK_THROWS_AS(report::plot_coordinate_means(coords, ones, base), SingleClass);
    CHECK_THROWS_AS(report::plot_coordinate_means(Mat(0, 4), Vec(0), base), ShapeMismatch);
}

TEST_CASE("prototype similarity heatmap is the absolute cosine matrix") {
    const std::string base = scratch_dir() + "/sim";
    pspace::PrototypeSpace space;
    space.b = Mat::Identity(4, 4);
    auto res = report::plot_prototype_similarity(space, base);
    auto rows = parse_csv(slurp(res.csv_path));
    REQUIRE(rows.size() == 4);
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
            CHECK(std::stod(rows[i][j]) == (i == j ? 1.0 : 0.0));
        }
    }

    space.b = Mat(3, 2);
    space.b << 1.0, 0.0,  //
        -2.0, 0.0,        // same line as row 0: |cos| = 1
        0.0, 5.0;
    auto res2 = report::plot_prototype_similarity(space, scratch_dir() + "/sim_dup");
    auto rows2 = parse_csv(slurp(res2.csv_path));
    CHECK(std::stod(rows2[0][1]) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::stod(rows2[0][2]) == doctest::Approx(0.0).epsilon(1e-12));
    for (int i = 0; i < 3; ++i) {
        CHECK(std::stod(rows2[i][i]) == 1.0);
        for (int j = 0; j < 3; ++j) {
            CHECK(std::stod(rows2[i][j]) == doctest::Approx(std::stod(rows2[j][i])).epsilon(1e-9));
        }
    }

    pspace::PrototypeSpace single;
    single.b = Mat::Ones(1, 3);
    CHECK_THROWS_AS(report::plot_prototype_similarity(single, base), IncompatibleSpec);
}

TEST_CASE("prototype-count sweep runs every cell and plots per-K means") {
    const std::string base = scratch_dir() + "/sweep";
    int calls = 0;
    report::SweepRunFn run = [&](int k, std::uint64_t seed) {
        ++calls;
        return 0.8 + 0.01 * k + 0.02 * static_cast<double>(seed);
    };
    auto res = report::sweep_prototype_count({2, 3, 4}, {0, 1}, 3, run, base, "accuracy");
    CHECK(calls == 6);
    REQUIRE(res.points.size() == 3);
    CHECK(res.default_k == 3);
    CHECK(res.points[0].k == 2);
    CHECK(res.points[0].runs == 2);
    // seeds 0,1 at k=2: values 0.82 and 0.84
    CHECK(res.points[0].mean == doctest::Approx(0.83).epsilon(1e-12));
    CHECK(res.points[0].stddev == doctest::Approx(0.01).epsilon(1e-12));

    auto rows = parse_csv(slurp(res.plot.csv_path));
    REQUIRE(rows.size() == 4);
    CHECK(rows[0] == std::vector<std::string>{"k", "mean", "stddev", "runs"});
    CHECK(rows[2][0] == "3");
    const std::string svg = slurp(res.plot.svg_path);
    CHECK(svg.find("default K = 3") != std::string::npos);
    CHECK(svg.find("polyline") != std::string::npos);

    CHECK_THROWS_AS(report::sweep_prototype_count({}, {0}, 2, run, base), IncompatibleSpec);
    CHECK_THROWS_AS(report::sweep_prototype_count({3, 2}, {0}, 2, run, base), IncompatibleSpec);
    CHECK_THROWS_AS(report::sweep_prototype_count({0, 2}, {0}, 2, run, base), IncompatibleSpec);
    CHECK_THROWS_AS(report::sweep_prototype_count({2, 3}, {}, 2, run, base), IncompatibleSpec);
}
