#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "doctest.h"
#include "protab/evaluate.hpp"
#include "protab/presets.hpp"
#include "protab/trainer.hpp"

using namespace protab;
using evaluate::MetricRecord;
using evaluate::Variant;

namespace {

std::string temp_store_path(const char* tag) {
    auto p = std::filesystem::temp_directory_path() /
             (std::string("protab_test_") + tag + ".ndjson");
    std::filesystem::remove(p);
    return p.string();
}

MetricRecord stub_record(const std::string& preset, const std::string& backbone,
                         std::uint64_t seed, Variant variant, double value) {
    MetricRecord r;
    r.dataset = preset;
    r.backbone = backbone;
    r.variant = evaluate::variant_name(variant);
    r.seed = seed;
    r.metric_name = "accuracy";
    r.value = value;
    return r;
}

// Literal two-sided exact test: enumerate every sign assignment of the
// observed midranks and count the tail mass directly.
struct OracleResult {
    double statistic;
    double p_value;
    int n_used;
};

OracleResult wilcoxon_oracle(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> d;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] - b[i] != 0.0) d.push_back(a[i] - b[i]);
    }
    const int n = static_cast<int>(d.size());
    std::vector<int> order(d.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int i, int j) { return std::abs(d[i]) < std::abs(d[j]); });
    std::vector<double> rank(d.size());
    int i = 0;
    while (i < n) {
        int j = i;
        while (j + 1 < n && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
        const double mid = (i + 1 + j + 1) / 2.0;
        for (int t = i; t <= j; ++t) rank[order[t]] = mid;
        i = j + 1;
    }
    double wpos = 0.0, wneg = 0.0;
    for (int t = 0; t < n; ++t) (d[t] > 0.0 ? wpos : wneg) += rank[t];
    const double w = std::min(wpos, wneg);
    long long below = 0;
    for (long long mask = 0; mask < (1LL << n); ++mask) {
        double s = 0.0;
        for (int t = 0; t < n; ++t) {
            if (mask & (1LL << t)) s += rank[t];
        }
        if (s <= w + 1e-12) ++below;
    }
    return {w, std::min(1.0, 2.0 * static_cast<double>(below) / std::pow(2.0, n)), n};
}

}  // namespace

TEST_CASE("variant names round trip") {
    for (auto v : {Variant::full, Variant::no_O, Variant::no_O_D, Variant::baseline}) {
        CHECK(evaluate::variant_from_name(evaluate::variant_name(v)) == v);
    }
    CHECK_THROWS_AS(evaluate::variant_from_name("no_D"), IncompatibleSpec);
}

TEST_CASE("accuracy follows the decision rule of each task") {
    Mat logits(4, 1);
    logits << -1.0, 2.0, 0.5, -0.2;
    Vec y(4);
    y << 0, 1, 1, 1;
    CHECK(evaluate::accuracy(logits, y, Task::binclass) == 0.75);

    Mat scores(3, 3);
    scores << 5, 1, 1,  //
        0, 2, 9,        //
        1, 1, 0;        // tied max: the first index wins
    Vec my(3);
    my << 0, 2, 0;
    CHECK(evaluate::accuracy(scores, my, Task::multiclass) == 1.0);
    my << 0, 2, 1;
    CHECK(evaluate::accuracy(scores, my, Task::multiclass) == doctest::Approx(2.0 / 3.0));

    // a constant always-positive logit on balanced labels scores exactly 1/2
    Mat ones = Mat::Ones(10, 1);
    Vec half(10);
    for (int i = 0; i < 10; ++i) half[i] = i % 2;
    CHECK(evaluate::accuracy(ones, half, Task::binclass) == 0.5);

    CHECK_THROWS_AS(evaluate::accuracy(logits, y, Task::regression), IncompatibleSpec);
    Vec wrong(3);
    wrong << 0, 1, 0;
    CHECK_THROWS_AS(evaluate::accuracy(logits, wrong, Task::binclass), ShapeMismatch);
    CHECK_THROWS_AS(evaluate::accuracy(Mat(0, 1), Vec(0), Task::binclass), ShapeMismatch);
}

TEST_CASE("rmse matches the closed form and rejects bad shapes") {
    Mat zero = Mat::Zero(2, 1);
    Vec y(2);
    y << 3.0, 4.0;
    CHECK(evaluate::rmse(zero, y) == doctest::Approx(std::sqrt(12.5)));

    // predicting the mean of standardized labels scores their population std
    Vec pm(2);
    pm << -1.0, 1.0;
    CHECK(evaluate::rmse(Mat::Zero(2, 1), pm) == 1.0);

    CHECK_THROWS_AS(evaluate::rmse(Mat::Zero(2, 2), y), ShapeMismatch);
    CHECK_THROWS_AS(evaluate::rmse(Mat(0, 1), Vec(0)), ShapeMismatch);
}

TEST_CASE("accuracy and rmse are invariant to row order") {
    Rng rng = Rng::from(71, 1ULL);
    Mat p(20, 1);
    Vec y(20);
    for (int i = 0; i < 20; ++i) {
        p(i, 0) = rng.uniform(-2.0, 2.0);
        y[i] = static_cast<double>(i % 2);
    }
    std::vector<int> perm(20);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    Mat ps(20, 1);
    Vec ys(20);
    for (int i = 0; i < 20; ++i) {
        ps(i, 0) = p(perm[i], 0);
        ys[i] = y[perm[i]];
    }
    CHECK(evaluate::accuracy(p, y, Task::binclass) == evaluate::accuracy(ps, ys, Task::binclass));
    CHECK(evaluate::rmse(p, y) == doctest::Approx(evaluate::rmse(ps, ys)).epsilon(1e-12));
}

TEST_CASE("evaluate produces a fully keyed record and checks the schema") {
    data::TabularDataset ds = data::make_synthetic(120, 3, Task::binclass, 31, nullptr, 2, 8.0);
    model::BackboneSpec spec;
    spec.kind = model::BackboneKind::mlp;
    spec.depth = 2;
    spec.hidden_dim = 8;
    auto bundle = model::build_model(spec, ds.schema, ds.task, 31, 2);

    MetricRecord r = evaluate::evaluate(bundle, ds, "blob", Variant::no_O, 31);
    CHECK(r.dataset == "blob");
    CHECK(r.backbone == "mlp");
    CHECK(r.variant == "no_O");
    CHECK(r.seed == 31);
    CHECK(r.metric_name == "accuracy");
    CHECK(r.value >= 0.0);
    CHECK(r.value <= 1.0);
    CHECK(r.key() == "blob|mlp|no_O|31|accuracy");

    MetricRecord back = MetricRecord::from_json(r.to_json());
    CHECK(back.key() == r.key());
    CHECK(back.value == r.value);

    data::TabularDataset reg = data::make_synthetic(60, 3, Task::regression, 32);
    auto rb = model::build_model(spec, reg.schema, reg.task, 32);
    CHECK(evaluate::evaluate(rb, reg).metric_name == "rmse");

    data::TabularDataset renamed = ds;
    renamed.schema[0].name = "other";
    CHECK_THROWS_AS(evaluate::evaluate(bundle, renamed), SchemaMismatch);
    data::TabularDataset narrow = data::make_synthetic(20, 2, Task::binclass, 33, nullptr, 2);
    CHECK_THROWS_AS(evaluate::evaluate(bundle, narrow), SchemaMismatch);
}

TEST_CASE("record store appends once per key and survives reload") {
    const std::string path = temp_store_path("store");
    {
        evaluate::RecordStore store(path);
        CHECK(store.records().empty());
        MetricRecord r = stub_record("p", "mlp", 0, Variant::full, 0.9);
        CHECK(store.append(r));
        CHECK_FALSE(store.contains("p|mlp|full|1|accuracy"));
        CHECK(store.contains(r.key()));
        r.value = 0.1;  // same key, different value: still a duplicate
        CHECK_FALSE(store.append(r));
        CHECK(store.records().size() == 1);
        CHECK(store.records()[0].value == 0.9);
    }
    {
        std::ofstream out(path, std::ios::app);
        out << "\n";  // blank lines are tolerated on reload
    }
    evaluate::RecordStore reloaded(path);
    CHECK(reloaded.records().size() == 1);
    CHECK(reloaded.records()[0].value == 0.9);
    CHECK_FALSE(reloaded.append(stub_record("p", "mlp", 0, Variant::full, 0.5)));
    std::filesystem::remove(path);

    evaluate::RecordStore bad("/nonexistent-dir/protab.ndjson");
    CHECK_THROWS_AS(bad.append(stub_record("p", "mlp", 0, Variant::full, 0.5)), Error);
}

TEST_CASE("the ablation grid runs each cell once") {
    const std::string path = temp_store_path("grid");
    evaluate::RecordStore store(path);
    // a finished cell recorded under rmse must also be recognized as done
    MetricRecord done = stub_record("p", "mlp", 0, Variant::full, 0.4);
    done.metric_name = "rmse";
    store.append(done);

    int calls = 0;
    evaluate::RunFn run = [&](const std::string& preset, const std::string& backbone,
                              std::uint64_t seed, Variant variant) {
        ++calls;
        return stub_record(preset, backbone, seed, variant, 0.5 + 0.01 * calls);
    };
    const std::vector<Variant> variants{Variant::full, Variant::no_O, Variant::no_O_D,
                                        Variant::baseline};
    auto produced = evaluate::run_ablation_grid({"p"}, {"mlp"}, {0, 1}, variants, run, store);
    CHECK(calls == 7);  // 1 x 1 x 2 x 4 minus the preseeded cell
    CHECK(produced.size() == 7);
    CHECK(store.records().size() == 8);

    auto again = evaluate::run_ablation_grid({"p"}, {"mlp"}, {0, 1}, variants, run, store);
    CHECK(calls == 7);
    CHECK(again.empty());
    CHECK(store.records().size() == 8);
    std::filesystem::remove(path);
}

TEST_CASE("aggregate computes grouped means and population stddev") {
    std::vector<MetricRecord> records;
    records.push_back(stub_record("A", "mlp", 0, Variant::full, 0.5));
    records.push_back(stub_record("A", "mlp", 1, Variant::full, 0.7));
    records.push_back(stub_record("A", "mlp", 0, Variant::baseline, 0.4));
    records.push_back(stub_record("B", "mlp", 0, Variant::full, 0.9));

    auto rows = evaluate::aggregate(records, {"dataset", "variant"});
    REQUIRE(rows.size() == 3);
    // sorted ascending by grouped key: A|baseline, A|full, B|full
    CHECK(rows[0].dataset == "A");
    CHECK(rows[0].variant == "baseline");
    CHECK(rows[0].backbone == "*");
    CHECK(rows[0].count == 1);
    CHECK(rows[0].stddev == 0.0);
    CHECK(rows[1].variant == "full");
    CHECK(rows[1].count == 2);
    CHECK(rows[1].mean == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(rows[1].stddev == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(rows[2].dataset == "B");

    // order of the input records does not matter
    std::swap(records[0], records[3]);
    auto rows2 = evaluate::aggregate(records, {"dataset", "variant"});
    REQUIRE(rows2.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(rows2[i].mean == rows[i].mean);
        CHECK(rows2[i].stddev == rows[i].stddev);
    }

    auto collapsed = evaluate::aggregate(records, {});
    REQUIRE(collapsed.size() == 1);
    CHECK(collapsed[0].count == 4);

    CHECK_THROWS_AS(evaluate::aggregate({}, {"dataset"}), EmptyGroup);
    CHECK_THROWS_AS(evaluate::aggregate(records, {"seed"}), Error);

    const std::string csv = evaluate::summary_csv(rows);
    CHECK(csv.rfind("dataset,backbone,variant,metric,count,mean,stddev\n", 0) == 0);
    CHECK(csv.find("A,*,full") != std::string::npos);

    const std::string text = evaluate::summary_text(rows);
    CHECK(text.rfind("dataset", 0) == 0);
    CHECK(text.find("0.6000") != std::string::npos);
    // every line is padded to aligned columns
    CHECK(text.find("baseline  ") != std::string::npos);
}

TEST_CASE("win counts follow metric direction and credit ties") {
    std::vector<MetricRecord> records;
    // dataset A, accuracy: full wins
    records.push_back(stub_record("A", "mlp", 0, Variant::full, 0.9));
    records.push_back(stub_record("A", "mlp", 1, Variant::full, 0.8));
    records.push_back(stub_record("A", "mlp", 0, Variant::baseline, 0.8));
    // dataset B, rmse: lower is better, baseline wins
    MetricRecord rb = stub_record("B", "mlp", 0, Variant::full, 0.5);
    rb.metric_name = "rmse";
    records.push_back(rb);
    rb = stub_record("B", "mlp", 0, Variant::baseline, 0.4);
    rb.metric_name = "rmse";
    records.push_back(rb);
    // dataset C: exact tie credits both
    records.push_back(stub_record("C", "mlp", 0, Variant::full, 0.7));
    records.push_back(stub_record("C", "mlp", 0, Variant::baseline, 0.7));

    auto wins = evaluate::win_counts(records);
    CHECK(wins["full"] == 2);
    CHECK(wins["baseline"] == 2);
    CHECK_THROWS_AS(evaluate::win_counts({}), EmptyGroup);
}

TEST_CASE("wilcoxon rejects degenerate inputs") {
    CHECK_THROWS_AS(evaluate::wilcoxon_signed_rank({1, 2}, {1, 2, 3}), ShapeMismatch);
    std::vector<double> same{1, 2, 3, 4, 5, 6, 7, 8};
    CHECK_THROWS_AS(evaluate::wilcoxon_signed_rank(same, same), TooFewPairs);
    CHECK_THROWS_AS(evaluate::wilcoxon_signed_rank({1, 2, 3, 4}, {0, 0, 0, 0}), TooFewPairs);
}

TEST_CASE("wilcoxon reproduces the textbook critical value at n = 10") {
    // distinct magnitudes 1..10; the negative set controls W exactly
    auto build = [](std::initializer_list<int> negative) {
        std::vector<double> a, b(10, 0.0);
        for (int i = 1; i <= 10; ++i) {
            double v = i;
            for (int n : negative) {
                if (n == i) v = -v;
            }
            a.push_back(v);
        }
        return std::make_pair(a, b);
    };
    auto [a8, b8] = build({3, 5});  // W- = 8
    auto r8 = evaluate::wilcoxon_signed_rank(a8, b8);
    CHECK(r8.exact);
    CHECK(r8.statistic == 8.0);
    CHECK(r8.p_value == doctest::Approx(50.0 / 1024.0).epsilon(1e-12));
    CHECK(r8.reject_at_0_05);

    auto [a9, b9] = build({4, 5});  // W- = 9, one past the critical value
    auto r9 = evaluate::wilcoxon_signed_rank(a9, b9);
    CHECK(r9.statistic == 9.0);
    CHECK(r9.p_value == doctest::Approx(66.0 / 1024.0).epsilon(1e-12));
    CHECK_FALSE(r9.reject_at_0_05);

    // uniform positive shift: W = 0, p = 2 / 2^10
    std::vector<double> base(10), shifted(10);
    for (int i = 0; i < 10; ++i) {
        base[i] = i;
        shifted[i] = i + 1.0;
    }
    auto r0 = evaluate::wilcoxon_signed_rank(shifted, base);
    CHECK(r0.statistic == 0.0);
    CHECK(r0.p_value == doctest::Approx(2.0 / 1024.0).epsilon(1e-12));
    CHECK(r0.reject_at_0_05);
}

TEST_CASE("wilcoxon exact path matches full sign enumeration") {
    Rng rng = Rng::from(2026, 0x1157ULL);
    int compared = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 6 + static_cast<int>(rng.below(7));  // 6..12 pairs
        std::vector<double> a(n), b(n);
        for (int i = 0; i < n; ++i) {
            // one-decimal grid forces occasional ties and zero differences
            a[i] = std::round(rng.uniform(-1.5, 1.5) * 10.0) / 10.0;
            b[i] = std::round(rng.uniform(-1.5, 1.5) * 10.0) / 10.0;
        }
        OracleResult oracle = wilcoxon_oracle(a, b);
        if (oracle.n_used < 5) {
            CHECK_THROWS_AS(evaluate::wilcoxon_signed_rank(a, b), TooFewPairs);
            continue;
        }
        auto got = evaluate::wilcoxon_signed_rank(a, b);
        ++compared;
        CHECK(got.exact);
        CHECK(got.n_used == oracle.n_used);
        CHECK(got.statistic == doctest::Approx(oracle.statistic).epsilon(1e-12));
        CHECK(got.p_value == doctest::Approx(oracle.p_value).epsilon(1e-12));
        CHECK(got.reject_at_0_05 == (oracle.p_value <= 0.05));
    }
    CHECK(compared >= 15);  // the grid rarely produces < 5 usable pairs
}

TEST_CASE("wilcoxon size is close to 0.05 under the null") {
    Rng rng = Rng::from(5, 0xca1bULL);
    int rejections = 0;
    const int trials = 1000;
    for (int t = 0; t < trials; ++t) {
        std::vector<double> a(10), b(10);
        for (int i = 0; i < 10; ++i) {
            a[i] = rng.gaussian();
            b[i] = rng.gaussian();
        }
        if (evaluate::wilcoxon_signed_rank(a, b).reject_at_0_05) ++rejections;
    }
    const double rate = static_cast<double>(rejections) / trials;
    CHECK(rate > 0.02);
    CHECK(rate < 0.08);
}

TEST_CASE("the preset registry knows the benchmark suite") {
    CHECK(presets::preset_names().size() == 8);

    const auto& ad = presets::preset_info("AD");
    CHECK(ad.task == Task::binclass);
    CHECK(ad.file_backed);
    CHECK(ad.feature_count == 14);
    CHECK(ad.numeric_mode == data::NumericMode::quantile);

    const auto& he = presets::preset_info("HE");
    CHECK(he.task == Task::multiclass);
    CHECK(he.num_classes == 100);
    CHECK(he.numeric_mode == data::NumericMode::standardize);
    CHECK(presets::preset_info("AL").numeric_mode == data::NumericMode::standardize);
    CHECK(presets::preset_info("CA").task == Task::regression);
    CHECK_FALSE(presets::preset_info("synthetic").file_backed);

    CHECK(presets::default_k("AD") == 3);   // ceil(ln 14)
    CHECK(presets::default_k("AL") == 5);   // ceil(ln 128)
    CHECK(presets::default_k("synthetic") == 2);

    CHECK_THROWS_AS(presets::preset_info("adult"), UnknownPreset);
    CHECK_THROWS_AS(presets::load_preset("nope", 0), UnknownPreset);
}

TEST_CASE("synthetic presets load deterministically; file presets demand their files") {
    auto a = presets::load_preset("synthetic", 4);
    CHECK(a.train.n() == 600);
    CHECK(a.val.n() == 200);
    CHECK(a.test.n() == 200);
    CHECK(a.train.task == Task::binclass);
    CHECK(a.indices.train.size() == 600);

    auto b = presets::load_preset("synthetic", 4);
    CHECK(a.train.rows == b.train.rows);
    CHECK(a.test.labels == b.test.labels);

    // a different seed reshuffles the split of the same fixed dataset
    auto c = presets::load_preset("synthetic", 5);
    CHECK(a.indices.train != c.indices.train);
    const double total_a = a.train.labels.sum() + a.val.labels.sum() + a.test.labels.sum();
    const double total_c = c.train.labels.sum() + c.val.labels.sum() + c.test.labels.sum();
    CHECK(total_a == total_c);

    auto reg = presets::load_preset("synthetic-reg", 0);
    CHECK(reg.train.task == Task::regression);
    // labels standardized by the train-fitted state
    CHECK(std::abs(reg.train.labels.mean()) < 1e-9);

    CHECK_THROWS_WITH_AS(presets::load_preset("CA", 0, "data"),
                         doctest::Contains("fetch_data"), Error);
}

TEST_CASE("variants map onto the trainer's ablation switches") {
    trainer::TrainConfig base;
    CHECK(presets::apply_variant(base, Variant::full).ablation.empty());
    auto no_o = presets::apply_variant(base, Variant::no_O);
    CHECK(no_o.ablation == std::set<trainer::Ablation>{trainer::Ablation::no_orthogonalization});
    auto no_od = presets::apply_variant(base, Variant::no_O_D);
    CHECK(no_od.ablation.size() == 2);
    CHECK(no_od.effective_weights().w_orthogonalization == 0.0);
    CHECK(no_od.effective_weights().w_diversifying == 0.0);
    CHECK(no_od.effective_weights().w_projecting == 0.25);
    auto baseline = presets::apply_variant(base, Variant::baseline);
    CHECK(baseline.baseline_only());

    // variant switches replace whatever the base carried
    base.ablation = {trainer::Ablation::no_diversifying};
    CHECK(presets::apply_variant(base, Variant::full).ablation.empty());
}

TEST_CASE("the grid runner trains a preset cell end to end") {
    model::BackboneSpec spec;
    spec.depth = 2;
    spec.hidden_dim = 8;
    spec.embedding_dim = 4;
    trainer::TrainConfig config;
    config.batch_size = 128;
    config.max_epochs_phase1 = 2;
    config.max_epochs_phase2 = 2;

    auto run = presets::make_grid_runner(spec, config);
    MetricRecord full = run("synthetic", "mlp", 7, Variant::full);
    CHECK(full.dataset == "synthetic");
    CHECK(full.backbone == "mlp");
    CHECK(full.variant == "full");
    CHECK(full.seed == 7);
    CHECK(full.metric_name == "accuracy");
    CHECK(full.value >= 0.0);
    CHECK(full.value <= 1.0);

    MetricRecord base = run("synthetic", "mlp", 7, Variant::baseline);
    CHECK(base.variant == "baseline");
    CHECK(base.metric_name == "accuracy");
}

TEST_CASE("wilcoxon switches to the normal approximation for large n") {
    std::vector<double> a(30), b(30, 0.0);
    for (int i = 0; i < 30; ++i) a[i] = i + 1.0;  // all positive, distinct
    auto shifted = evaluate::wilcoxon_signed_rank(a, b);
    CHECK_FALSE(shifted.exact);
    CHECK(shifted.statistic == 0.0);
    CHECK(shifted.p_value < 1e-5);
    CHECK(shifted.reject_at_0_05);

    for (int i = 0; i < 30; ++i) a[i] = (i % 2 == 0 ? 1.0 : -1.0) * (i + 1.0);
    auto balanced = evaluate::wilcoxon_signed_rank(a, b);
    CHECK_FALSE(balanced.exact);
    CHECK(balanced.p_value > 0.5);
    CHECK_FALSE(balanced.reject_at_0_05);
}
