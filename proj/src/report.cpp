#include "protab/report.hpp"

#include <algorithm>
#include <array>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

namespace protab::report {

namespace {

using nlohmann::json;

// FIPS 180-4 SHA-256
constexpr std::uint32_t kRound[64] = {
    0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4,
    0xab1c5ed5, 0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe,
    0x9bdc06a7, 0xc19bf174, 0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc, 0x2de92c6f,
    0x4a7484aa, 0x5cb0a9dc, 0x76f988da, 0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7,
    0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967, 0x27b70a85, 0x2e1b2138, 0x4d2c6dfc,
    0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85, 0xa2bfe8a1, 0xa81a664b,
    0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070, 0x19a4c116,
    0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f, 0x682e6ff3,
    0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7,
    0xc67178f2};

inline std::uint32_t rotr(std::uint32_t x, int n) { return (x >> n) | (x << (32 - n)); }

class Sha256 {
   public:
    void update(const unsigned char* p, std::size_t n) {
        total_ += n;
        while (n > 0) {
            const std::size_t take = std::min(n, buf_.size() - fill_);
            std::copy(p, p + take, buf_.begin() + static_cast<std::ptrdiff_t>(fill_));
            fill_ += take;
            p += take;
            n -= take;
            if (fill_ == buf_.size()) {
                block(buf_.data());
                fill_ = 0;
            }
        }
    }

    std::string hex_digest() {
        const std::uint64_t bits = total_ * 8;
        const unsigned char one = 0x80;
        update(&one, 1);
        const unsigned char zero = 0x00;
        while (fill_ != 56) update(&zero, 1);
        unsigned char len[8];
        for (int i = 0; i < 8; ++i) len[i] = static_cast<unsigned char>(bits >> (56 - 8 * i));
        total_ -= 9;  // padding does not count toward the message length
        update(len, 8);
        char out[65];
        for (int i = 0; i < 8; ++i) std::snprintf(out + 8 * i, 9, "%08x", h_[i]);
        return std::string(out, 64);
    }

   private:
    void block(const unsigned char* p) {
        std::uint32_t w[64];
        for (int t = 0; t < 16; ++t) {
            w[t] = (std::uint32_t(p[4 * t]) << 24) | (std::uint32_t(p[4 * t + 1]) << 16) |
                   (std::uint32_t(p[4 * t + 2]) << 8) | std::uint32_t(p[4 * t + 3]);
        }
        for (int t = 16; t < 64; ++t) {
            const std::uint32_t s0 = rotr(w[t - 15], 7) ^ rotr(w[t - 15], 18) ^ (w[t - 15] >> 3);
            const std::uint32_t s1 = rotr(w[t - 2], 17) ^ rotr(w[t - 2], 19) ^ (w[t - 2] >> 10);
            w[t] = w[t - 16] + s0 + w[t - 7] + s1;
        }
        std::uint32_t a = h_[0], b = h_[1], c = h_[2], d = h_[3];
        std::uint32_t e = h_[4], f = h_[5], g = h_[6], h = h_[7];
        for (int t = 0; t < 64; ++t) {
            const std::uint32_t S1 = rotr(e, 6) ^ rotr(e, 11) ^ rotr(e, 25);
            const std::uint32_t ch = (e & f) ^ (~e & g);
            const std::uint32_t t1 = h + S1 + ch + kRound[t] + w[t];
            const std::uint32_t S0 = rotr(a, 2) ^ rotr(a, 13) ^ rotr(a, 22);
            const std::uint32_t maj = (a & b) ^ (a & c) ^ (b & c);
            const std::uint32_t t2 = S0 + maj;
            h = g;
            g = f;
            f = e;
            e = d + t1;
            d = c;
            c = b;
            b = a;
            a = t1 + t2;
        }
        h_[0] += a;
        h_[1] += b;
        h_[2] += c;
        h_[3] += d;
        h_[4] += e;
        h_[5] += f;
        h_[6] += g;
        h_[7] += h;
    }

    std::array<std::uint32_t, 8> h_{0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a,
                                    0x510e527f, 0x9b05688c, 0x1f83d9ab, 0x5be0cd19};
    std::array<unsigned char, 64> buf_{};
    std::size_t fill_ = 0;
    std::uint64_t total_ = 0;
};

void write_text(const std::string& path, const std::string& content) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    out << content;
    if (!out.flush()) throw Error("short write on " + path);
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

const char* kPalette[8] = {"#4472c4", "#ed7d31", "#70ad47", "#a02b93",
                           "#c00000", "#00b0c7", "#b78600", "#595959"};

// distinct label values, ascending, mapped to palette slots
std::map<double, int> label_slots(const Vec& labels) {
    std::map<double, int> slots;
    for (Eigen::Index i = 0; i < labels.size(); ++i) slots.emplace(labels[i], 0);
    int next = 0;
    for (auto& [value, slot] : slots) slot = next++;
    return slots;
}

struct Range {
    double lo, hi;
};

Range padded_range(double lo, double hi) {
    if (lo == hi) return {lo - 1.0, hi + 1.0};
    const double pad = 0.05 * (hi - lo);
    return {lo - pad, hi + pad};
}

double plain_cos(const Vec& a, const Vec& b) {
    const double na = std::max(a.norm(), 1e-8);
    const double nb = std::max(b.norm(), 1e-8);
    return a.dot(b) / (na * nb);
}

std::string svg_open(int width, int height, const std::string& title,
                     const std::string& metadata) {
    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
    if (!metadata.empty()) s << "  <metadata>" << metadata << "</metadata>\n";
    s << "  <rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    s << "  <text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"14\">" << title << "</text>\n";
    return s.str();
}

}  // namespace

std::string sha256_hex(const std::string& bytes) {
    Sha256 h;
    h.update(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size());
    return h.hex_digest();
}

std::string sha256_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path);
    Sha256 h;
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        h.update(reinterpret_cast<const unsigned char*>(buf),
                 static_cast<std::size_t>(in.gcount()));
    }
    return h.hex_digest();
}

void RunManifest::add_file(const std::string& relative_path) {
    const std::string full = output_dir.empty() ? relative_path
                                                : output_dir + "/" + relative_path;
    ManifestEntry entry;
    entry.path = relative_path;
    entry.sha256 = sha256_file(full);
    entry.bytes = static_cast<std::uint64_t>(std::filesystem::file_size(full));
    outputs.push_back(std::move(entry));
}

std::string RunManifest::to_json() const {
    json files = json::array();
    for (const auto& e : outputs) {
        files.push_back({{"path", e.path}, {"sha256", e.sha256}, {"bytes", e.bytes}});
    }
    json j{{"command", command},
           {"config_path", config_path},
           {"config_snapshot", config_snapshot},
           {"inputs_hash", inputs_hash},
           {"created_utc", created_utc},
           {"output_dir", output_dir},
           {"outputs", files}};
    return j.dump(2);
}

RunManifest RunManifest::from_json(const std::string& text) {
    const json j = json::parse(text);
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.config_path = j.at("config_path").get<std::string>();
    m.config_snapshot = j.at("config_snapshot").get<std::string>();
    m.inputs_hash = j.at("inputs_hash").get<std::string>();
    m.created_utc = j.at("created_utc").get<std::string>();
    m.output_dir = j.at("output_dir").get<std::string>();
    for (const auto& f : j.at("outputs")) {
        ManifestEntry e;
        e.path = f.at("path").get<std::string>();
        e.sha256 = f.at("sha256").get<std::string>();
        e.bytes = f.at("bytes").get<std::uint64_t>();
        m.outputs.push_back(std::move(e));
    }
    return m;
}

void RunManifest::write() const {
    write_text(output_dir + "/manifest.json", to_json() + "\n");
}

const char* reduction_name(Reduction r) {
    return r == Reduction::pca ? "pca" : "tsne_external";
}

Reduction reduction_from_name(const std::string& name) {
    if (name == "pca") return Reduction::pca;
    if (name == "tsne_external") return Reduction::tsne_external;
    throw IncompatibleSpec("unknown reduction: " + name);
}

Mat reduce_2d(const Mat& reps, Reduction method) {
    if (method == Reduction::tsne_external) {
        throw IncompatibleSpec("no external t-SNE backend is wired in; use pca");
    }
    if (reps.rows() < 1 || reps.cols() < 1) throw ShapeMismatch("reduce_2d: empty input");
    const Mat centered = reps.rowwise() - reps.colwise().mean();
    const Mat cov = centered.transpose() * centered / static_cast<double>(reps.rows());
    Eigen::SelfAdjointEigenSolver<Mat> eig(cov);
    if (eig.info() != Eigen::Success) throw NonFiniteInput("reduce_2d: eigendecomposition failed");
    Mat out = Mat::Zero(reps.rows(), 2);
    const int avail = std::min<int>(2, static_cast<int>(reps.cols()));
    for (int c = 0; c < avail; ++c) {
        // eigenvalues come back ascending; take from the top
        Vec axis = eig.eigenvectors().col(reps.cols() - 1 - c);
        Eigen::Index peak;
        axis.cwiseAbs().maxCoeff(&peak);
        if (axis[peak] < 0.0) axis = -axis;  // deterministic sign
        out.col(c) = centered * axis;
    }
    return out;
}

PlotResult plot_embeddings(const Mat& reps, const Vec& labels, const std::string& out_base,
                           Reduction method) {
    if (reps.rows() < 3) throw TooFewSamples("plot_embeddings needs at least 3 samples");
    if (labels.size() != reps.rows()) throw ShapeMismatch("plot_embeddings: label count");
    const Mat xy = reduce_2d(reps, method);

    std::ostringstream csv;
    csv << "x,y,label\n";
    for (Eigen::Index i = 0; i < xy.rows(); ++i) {
        csv << fmt(xy(i, 0)) << ',' << fmt(xy(i, 1)) << ',' << fmt(labels[i]) << "\n";
    }

    const int w = 640, h = 480, m = 50;
    const Range rx = padded_range(xy.col(0).minCoeff(), xy.col(0).maxCoeff());
    const Range ry = padded_range(xy.col(1).minCoeff(), xy.col(1).maxCoeff());
    const auto sx = [&](double v) { return m + (v - rx.lo) / (rx.hi - rx.lo) * (w - 2 * m); };
    const auto sy = [&](double v) { return h - m - (v - ry.lo) / (ry.hi - ry.lo) * (h - 2 * m); };
    const auto slots = label_slots(labels);

    std::ostringstream svg;
    svg << svg_open(w, h, "embeddings (" + std::string(reduction_name(method)) + ")",
                    std::string("reduction=") + reduction_name(method));
    svg << "  <rect x=\"" << m << "\" y=\"" << m << "\" width=\"" << w - 2 * m << "\" height=\""
        << h - 2 * m << "\" fill=\"none\" stroke=\"#333\"/>\n";
    for (Eigen::Index i = 0; i < xy.rows(); ++i) {
        const int slot = slots.at(labels[i]) % 8;
        svg << "  <circle cx=\"" << fmt2(sx(xy(i, 0))) << "\" cy=\"" << fmt2(sy(xy(i, 1)))
            << "\" r=\"3\" fill=\"" << kPalette[slot] << "\" fill-opacity=\"0.75\"/>\n";
    }
    int row = 0;
    for (const auto& [value, slot] : slots) {
        const int y = m + 14 * row++;
        svg << "  <rect x=\"" << w - m + 6 << "\" y=\"" << y << "\" width=\"10\" height=\"10\""
            << " fill=\"" << kPalette[slot % 8] << "\"/>\n";
        svg << "  <text x=\"" << w - m + 20 << "\" y=\"" << y + 9
            << "\" font-family=\"sans-serif\" font-size=\"10\">" << fmt(value) << "</text>\n";
    }
    svg << "</svg>\n";

    PlotResult res{out_base + ".svg", out_base + ".csv"};
    write_text(res.csv_path, csv.str());
    write_text(res.svg_path, svg.str());
    return res;
}

PlotResult plot_coordinate_means(const Mat& coords, const Vec& labels,
                                 const std::string& out_base) {
    if (coords.rows() == 0) throw ShapeMismatch("plot_coordinate_means: empty batch");
    if (labels.size() != coords.rows()) throw ShapeMismatch("plot_coordinate_means: label count");
    const auto slots = label_slots(labels);
    if (slots.size() < 2) throw SingleClass("plot_coordinate_means needs >= 2 label groups");

    const int k = static_cast<int>(coords.cols());
    const int groups = static_cast<int>(slots.size());
    Mat means = Mat::Zero(groups, k);
    Vec counts = Vec::Zero(groups);
    std::vector<double> group_label(static_cast<std::size_t>(groups));
    for (const auto& [value, slot] : slots) group_label[static_cast<std::size_t>(slot)] = value;
    for (Eigen::Index i = 0; i < coords.rows(); ++i) {
        const int g = slots.at(labels[i]);
        means.row(g) += coords.row(i);
        counts[g] += 1.0;
    }
    for (int g = 0; g < groups; ++g) means.row(g) /= counts[g];
    const Vec difference = (means.row(0) - means.row(1)).transpose();

    std::ostringstream csv;
    csv << "label";
    for (int j = 0; j < k; ++j) csv << ",k" << j;
    csv << "\n";
    for (int g = 0; g < groups; ++g) {
        csv << fmt(group_label[static_cast<std::size_t>(g)]);
        for (int j = 0; j < k; ++j) csv << ',' << fmt(means(g, j));
        csv << "\n";
    }
    csv << "difference";
    for (int j = 0; j < k; ++j) csv << ',' << fmt(difference[j]);
    csv << "\n";

    // one bar panel per class plus the difference panel at the bottom
    const int panels = groups + 1;
    const int w = 640, panel_h = 110, m = 48;
    const int h = 40 + panels * panel_h + 20;
    double hi = std::max(means.maxCoeff(), difference.maxCoeff());
    double lo = std::min(0.0, std::min(means.minCoeff(), difference.minCoeff()));
    if (hi == lo) hi = lo + 1.0;
    const double bar_w = static_cast<double>(w - 2 * m) / k;

    std::ostringstream svg;
    svg << svg_open(w, h, "coordinate means by class", "");
    for (int p = 0; p < panels; ++p) {
        const int top = 40 + p * panel_h;
        const auto sy = [&](double v) {
            return top + (hi - v) / (hi - lo) * (panel_h - 30);
        };
        const bool diff_panel = p == groups;
        const std::string name =
            diff_panel ? "difference" : "class " + fmt(group_label[static_cast<std::size_t>(p)]);
        svg << "  <text x=\"" << m << "\" y=\"" << top - 4
            << "\" font-family=\"sans-serif\" font-size=\"11\">" << name << "</text>\n";
        svg << "  <line x1=\"" << m << "\" y1=\"" << fmt2(sy(0.0)) << "\" x2=\"" << w - m
            << "\" y2=\"" << fmt2(sy(0.0)) << "\" stroke=\"#999\"/>\n";
        for (int j = 0; j < k; ++j) {
            const double v = diff_panel ? difference[j] : means(p, j);
            const double y0 = sy(std::max(v, 0.0));
            const double y1 = sy(std::min(v, 0.0));
            const char* fill = diff_panel ? "#595959" : kPalette[p % 8];
            svg << "  <rect x=\"" << fmt2(m + j * bar_w + 1) << "\" y=\"" << fmt2(y0)
                << "\" width=\"" << fmt2(std::max(bar_w - 2, 1.0)) << "\" height=\""
                << fmt2(std::max(y1 - y0, 0.5)) << "\" fill=\"" << fill << "\"/>\n";
        }
    }
    svg << "</svg>\n";

    PlotResult res{out_base + ".svg", out_base + ".csv"};
    write_text(res.csv_path, csv.str());
    write_text(res.svg_path, svg.str());
    return res;
}

PlotResult plot_prototype_similarity(const pspace::PrototypeSpace& space,
                                     const std::string& out_base) {
    const int k = space.k();
    if (k < 2) throw IncompatibleSpec("plot_prototype_similarity needs K >= 2");
    Mat sim(k, k);
    for (int i = 0; i < k; ++i) {
        sim(i, i) = 1.0;
        for (int j = i + 1; j < k; ++j) {
            const double c = std::abs(plain_cos(space.b.row(i).transpose(),
                                                space.b.row(j).transpose()));
            sim(i, j) = c;
            sim(j, i) = c;
        }
    }

    std::ostringstream csv;
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) csv << (j ? "," : "") << fmt(sim(i, j));
        csv << "\n";
    }

    const int m = 60;
    const double cell = std::min(40.0, 400.0 / k);
    const int w = static_cast<int>(2 * m + k * cell), h = static_cast<int>(40 + m + k * cell);
    std::ostringstream svg;
    svg << svg_open(w, h, "|cos| between prototypes", "");
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) {
            const int shade = static_cast<int>(std::lround(255.0 * (1.0 - sim(i, j))));
            svg << "  <rect x=\"" << fmt2(m + j * cell) << "\" y=\"" << fmt2(40 + i * cell)
                << "\" width=\"" << fmt2(cell) << "\" height=\"" << fmt2(cell) << "\" fill=\"rgb("
                << shade << ',' << shade << ",255)\" stroke=\"#ddd\"/>\n";
        }
    }
    svg << "</svg>\n";

    PlotResult res{out_base + ".svg", out_base + ".csv"};
    write_text(res.csv_path, csv.str());
    write_text(res.svg_path, svg.str());
    return res;
}

SweepResult sweep_prototype_count(const std::vector<int>& k_values,
                                  const std::vector<std::uint64_t>& seeds, int default_k,
                                  const SweepRunFn& run, const std::string& out_base,
                                  const std::string& metric_label) {
    if (k_values.empty()) throw IncompatibleSpec("sweep needs at least one K");
    if (seeds.empty()) throw IncompatibleSpec("sweep needs at least one seed");
    for (std::size_t i = 0; i < k_values.size(); ++i) {
        if (k_values[i] < 1) throw IncompatibleSpec("K values must be >= 1");
        if (i > 0 && k_values[i] <= k_values[i - 1]) {
            throw IncompatibleSpec("K values must be strictly ascending");
        }
    }

    SweepResult result;
    result.default_k = default_k;
    for (int k : k_values) {
        SweepPoint pt;
        pt.k = k;
        std::vector<double> values;
        for (std::uint64_t seed : seeds) values.push_back(run(k, seed));
        pt.runs = static_cast<int>(values.size());
        pt.mean = 0.0;
        for (double v : values) pt.mean += v;
        pt.mean /= static_cast<double>(values.size());
        double acc = 0.0;
        for (double v : values) acc += (v - pt.mean) * (v - pt.mean);
        pt.stddev = std::sqrt(acc / static_cast<double>(values.size()));
        result.points.push_back(pt);
    }

    std::ostringstream csv;
    csv << "k,mean,stddev,runs\n";
    for (const auto& pt : result.points) {
        csv << pt.k << ',' << fmt(pt.mean) << ',' << fmt(pt.stddev) << ',' << pt.runs << "\n";
    }

    const int w = 640, h = 480, m = 60;
    double lo_v = result.points[0].mean, hi_v = lo_v;
    for (const auto& pt : result.points) {
        lo_v = std::min(lo_v, pt.mean - pt.stddev);
        hi_v = std::max(hi_v, pt.mean + pt.stddev);
    }
    const Range ry = padded_range(lo_v, hi_v);
    const int k_lo = std::min(k_values.front(), default_k);
    const int k_hi = std::max(k_values.back(), default_k);
    const Range rx = padded_range(k_lo, k_hi);
    const auto sx = [&](double v) { return m + (v - rx.lo) / (rx.hi - rx.lo) * (w - 2 * m); };
    const auto sy = [&](double v) { return h - m - (v - ry.lo) / (ry.hi - ry.lo) * (h - 2 * m); };

    std::ostringstream svg;
    svg << svg_open(w, h, metric_label + " vs prototype count", "");
    svg << "  <rect x=\"" << m << "\" y=\"" << m << "\" width=\"" << w - 2 * m << "\" height=\""
        << h - 2 * m << "\" fill=\"none\" stroke=\"#333\"/>\n";
    svg << "  <line x1=\"" << fmt2(sx(default_k)) << "\" y1=\"" << m << "\" x2=\""
        << fmt2(sx(default_k)) << "\" y2=\"" << h - m
        << "\" stroke=\"#c00000\" stroke-dasharray=\"5,4\"/>\n";
    svg << "  <text x=\"" << fmt2(sx(default_k) + 4) << "\" y=\"" << m + 14
        << "\" font-family=\"sans-serif\" font-size=\"10\" fill=\"#c00000\">default K = "
        << default_k << "</text>\n";
    std::ostringstream poly;
    for (const auto& pt : result.points) {
        poly << fmt2(sx(pt.k)) << ',' << fmt2(sy(pt.mean)) << ' ';
    }
    svg << "  <polyline points=\"" << poly.str()
        << "\" fill=\"none\" stroke=\"#4472c4\" stroke-width=\"2\"/>\n";
    for (const auto& pt : result.points) {
        svg << "  <line x1=\"" << fmt2(sx(pt.k)) << "\" y1=\"" << fmt2(sy(pt.mean - pt.stddev))
            << "\" x2=\"" << fmt2(sx(pt.k)) << "\" y2=\"" << fmt2(sy(pt.mean + pt.stddev))
            << "\" stroke=\"#4472c4\"/>\n";
        svg << "  <circle cx=\"" << fmt2(sx(pt.k)) << "\" cy=\"" << fmt2(sy(pt.mean))
            << "\" r=\"4\" fill=\"#4472c4\"/>\n";
        svg << "  <text x=\"" << fmt2(sx(pt.k)) << "\" y=\"" << h - m + 16
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" << pt.k
            << "</text>\n";
    }
    svg << "</svg>\n";

    result.plot = {out_base + ".svg", out_base + ".csv"};
    write_text(result.plot.csv_path, csv.str());
    write_text(result.plot.svg_path, svg.str());
    return result;
}

}  // namespace protab::report
