#include "msmae/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "msmae/rng.hpp"

namespace msmae {

namespace fs = std::filesystem;

std::string DatasetManifest::resolve(std::size_t i) const {
    const std::string& p = entries.at(i).path;
    if (!dir.empty() && fs::path(p).is_relative()) return (fs::path(dir) / p).string();
    return p;
}

static std::string strip_cr(std::string s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
}

static std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

DatasetManifest load_manifest(const std::string& csv_path) {
    std::ifstream in(csv_path);
    if (!in) throw std::invalid_argument("manifest: cannot open '" + csv_path + "'");

    DatasetManifest m;
    fs::path parent = fs::path(csv_path).parent_path();
    m.dir = parent.string();
    m.name = parent.filename().string();
    if (m.name.empty()) m.name = "dataset";

    std::string line;
    if (!std::getline(in, line) || strip_cr(line) != "path,gsd,label")
        throw std::invalid_argument("manifest: first line must be 'path,gsd,label' in '" +
                                    csv_path + "'");

    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        line = strip_cr(line);
        if (line.empty()) continue;
        std::vector<std::string> f = split_csv(line);
        if (f.size() != 3)
            throw std::invalid_argument("manifest: line " + std::to_string(lineno) +
                                        " has " + std::to_string(f.size()) +
                                        " fields, expected 3");
        ManifestEntry e;
        e.path = f[0];
        try {
            std::size_t used = 0;
            e.gsd = std::stod(f[1], &used);
            if (used != f[1].size()) throw std::invalid_argument("trailing junk");
        } catch (const std::exception&) {
            throw std::invalid_argument("manifest: line " + std::to_string(lineno) +
                                        ": bad gsd '" + f[1] + "'");
        }
        if (!(e.gsd > 0.0))
            throw std::invalid_argument("manifest: line " + std::to_string(lineno) +
                                        ": gsd must be positive, got " + f[1]);
        if (f[2].empty()) {
            e.label = -1;
        } else {
            try {
                std::size_t used = 0;
                e.label = std::stoi(f[2], &used);
                if (used != f[2].size()) throw std::invalid_argument("trailing junk");
            } catch (const std::exception&) {
                throw std::invalid_argument("manifest: line " + std::to_string(lineno) +
                                            ": bad label '" + f[2] + "'");
            }
        }
        m.entries.push_back(std::move(e));
    }
    if (m.entries.empty())
        throw std::invalid_argument("manifest: no entries in '" + csv_path + "'");
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
        std::string full = m.resolve(i);
        if (!fs::exists(full))
            throw std::invalid_argument("manifest: missing file '" + full + "'");
    }
    return m;
}

void save_manifest(const DatasetManifest& m, const std::string& csv_path) {
    std::ostringstream out;
    out << "path,gsd,label\n";
    for (const ManifestEntry& e : m.entries) {
        out << e.path << ',' << std::setprecision(17) << e.gsd << ',';
        if (e.label >= 0) out << e.label;
        out << '\n';
    }
    std::ofstream f(csv_path, std::ios::binary);
    if (!f) throw std::runtime_error("manifest: cannot write '" + csv_path + "'");
    f << out.str();
}

// ---- synthetic scenes ------------------------------------------------------

namespace {

struct Rect {
    double cx, cy;     // center, pixels
    double hx, hy;     // half extents along the rect's own axes
    double c, s;       // rotation
    double color[3];
};

void paint_rect(Tensor& px, const Rect& r) {
    auto h = static_cast<std::ptrdiff_t>(px.dim(0));
    auto w = static_cast<std::ptrdiff_t>(px.dim(1));
    // bounding box of the rotated rect, then exact point-in-rect tests
    double bx = r.hx * std::fabs(r.c) + r.hy * std::fabs(r.s);
    double by = r.hx * std::fabs(r.s) + r.hy * std::fabs(r.c);
    auto y0 = static_cast<std::ptrdiff_t>(std::floor(r.cy - by));
    auto y1 = static_cast<std::ptrdiff_t>(std::ceil(r.cy + by));
    auto x0 = static_cast<std::ptrdiff_t>(std::floor(r.cx - bx));
    auto x1 = static_cast<std::ptrdiff_t>(std::ceil(r.cx + bx));
    y0 = std::max<std::ptrdiff_t>(y0, 0);
    x0 = std::max<std::ptrdiff_t>(x0, 0);
    y1 = std::min(y1, h - 1);
    x1 = std::min(x1, w - 1);
    for (std::ptrdiff_t y = y0; y <= y1; ++y) {
        for (std::ptrdiff_t x = x0; x <= x1; ++x) {
            double dx = (double(x) + 0.5) - r.cx;
            double dy = (double(y) + 0.5) - r.cy;
            double u = r.c * dx + r.s * dy;
            double v = -r.s * dx + r.c * dy;
            if (std::fabs(u) <= r.hx && std::fabs(v) <= r.hy)
                for (std::size_t k = 0; k < 3; ++k)
                    px.at(std::size_t(y), std::size_t(x), k) = r.color[k];
        }
    }
}

Rect draw_rect(Rng& rng, double side, double half_lo, double half_hi) {
    Rect r;
    r.cx = rng.uniform() * side;
    r.cy = rng.uniform() * side;
    r.hx = rng.uniform(half_lo, half_hi);
    r.hy = rng.uniform(half_lo, half_hi);
    double theta = rng.uniform() * 3.14159265358979323846;
    r.c = std::cos(theta);
    r.s = std::sin(theta);
    return r;
}

// Two looks that differ strongly in edge density: a handful of large,
// mid-tone rectangles versus a clutter of small near-black/near-white
// ones. Classes beyond the second reuse the clutter look with shrinking
// rectangle counts so any `classes` value still produces distinct scenes.
// Backgrounds are tinted toward a per-class anchor hue: a cue that no
// amount of downsampling removes, so frozen-feature probes stay
// meaningful across the whole evaluation scale sweep.
Tensor synth_scene(std::size_t side, std::size_t cls, std::size_t n_classes,
                   std::uint64_t key) {
    Rng rng(key);
    Tensor px({side, side, 3});

    constexpr double kTau = 6.28318530717958647692;
    double phase = kTau * double(cls) / double(n_classes);
    double anchor[3];
    for (std::size_t k = 0; k < 3; ++k)
        anchor[k] = 0.5 + 0.45 * std::cos(phase - kTau * double(k) / 3.0);

    double ca[3], cb[3];
    for (std::size_t k = 0; k < 3; ++k) ca[k] = 0.5 * rng.uniform(0.2, 0.8) + 0.5 * anchor[k];
    for (std::size_t k = 0; k < 3; ++k) cb[k] = 0.5 * rng.uniform(0.2, 0.8) + 0.5 * anchor[k];
    bool horiz = rng.below(2) != 0;
    double denom = side > 1 ? double(side - 1) : 1.0;
    for (std::size_t y = 0; y < side; ++y)
        for (std::size_t x = 0; x < side; ++x) {
            double t = (horiz ? double(x) : double(y)) / denom;
            for (std::size_t k = 0; k < 3; ++k)
                px.at(y, x, k) = ca[k] + (cb[k] - ca[k]) * t;
        }

    double s = double(side);
    if (cls == 0) {
        for (int i = 0; i < 3; ++i) {
            Rect r = draw_rect(rng, s, s / 6.0, s / 4.0);
            for (double& c : r.color) c = rng.uniform(0.3, 0.7);
            paint_rect(px, r);
        }
    } else {
        std::size_t count = 30 / cls < 8 ? 8 : 30 / cls;
        for (std::size_t i = 0; i < count; ++i) {
            Rect r = draw_rect(rng, s, s / 32.0, s / 16.0);
            double base = rng.below(2) ? 0.95 : 0.05;
            for (double& c : r.color) c = base + rng.uniform(-0.05, 0.05);
            paint_rect(px, r);
        }
    }
    for (std::size_t i = 0; i < px.numel(); ++i) px[i] = std::clamp(px[i], 0.0, 1.0);
    return px;
}

} // namespace

DatasetManifest synth_dataset(const std::string& out_dir, const SynthSpec& spec) {
    if (spec.n_scenes == 0) throw std::invalid_argument("synth: n_scenes must be positive");
    if (spec.classes == 0) throw std::invalid_argument("synth: classes must be positive");
    if (spec.base_size < 32) throw std::invalid_argument("synth: base_size must be >= 32");
    if (!(spec.gsd_min > 0.0) || !(spec.gsd_max >= spec.gsd_min))
        throw std::invalid_argument("synth: need 0 < gsd_min <= gsd_max");

    fs::create_directories(out_dir);
    DatasetManifest m;
    m.dir = out_dir;
    m.name = fs::path(out_dir).filename().string();
    if (m.name.empty()) m.name = "synth";

    for (std::size_t i = 0; i < spec.n_scenes; ++i) {
        std::size_t cls = i % spec.classes;
        Tensor px = synth_scene(spec.base_size, cls, spec.classes,
                                derive_key(spec.seed, "scene", i));
        double gsd = Rng(derive_key(spec.seed, "gsd", i)).uniform(spec.gsd_min, spec.gsd_max);

        char name[32];
        std::snprintf(name, sizeof name, "scene_%04zu.png", i);
        save_png(RasterImage(std::move(px), gsd), (fs::path(out_dir) / name).string());

        ManifestEntry e;
        e.path = name;
        e.gsd = gsd;
        e.label = static_cast<int>(cls);
        m.entries.push_back(std::move(e));
    }
    save_manifest(m, (fs::path(out_dir) / "manifest.csv").string());
    return m;
}

} // namespace msmae
