#include "gcanet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>

#include "gcanet/image_io.hpp"

namespace fs = std::filesystem;

namespace gcanet {

std::string transmission_mode_name(TransmissionMode m) {
    switch (m) {
        case TransmissionMode::constant_t: return "constant_t";
        case TransmissionMode::depth_ramp: return "depth_ramp";
        case TransmissionMode::perlin_t: return "perlin_t";
    }
    throw std::logic_error("bad transmission mode");
}

TransmissionMode transmission_mode_from(const std::string& name) {
    if (name == "constant_t") return TransmissionMode::constant_t;
    if (name == "depth_ramp") return TransmissionMode::depth_ramp;
    if (name == "perlin_t") return TransmissionMode::perlin_t;
    throw std::invalid_argument("unknown transmission mode '" + name + "'");
}

Tensor apply_haze(const HazeScene& scene) {
    const Shape js = scene.clean.shape(), ts = scene.transmission.shape();
    if (js.h != ts.h || js.w != ts.w || ts.c != 1)
        throw std::invalid_argument("apply_haze: clean " + js.str() +
                                    " vs transmission " + ts.str());
    for (int64_t i = 0; i < scene.transmission.numel(); ++i) {
        const double t = scene.transmission[i];
        if (!(t > 0.0 && t <= 1.0))
            throw std::invalid_argument("apply_haze: transmission value " + std::to_string(t) +
                                        " outside (0,1]");
    }
    Tensor hazy(js);
    for (int64_t c = 0; c < 3; ++c) {
        const double a = scene.airlight[c];
        for (int64_t y = 0; y < js.h; ++y)
            for (int64_t x = 0; x < js.w; ++x) {
                const double t = scene.transmission.at(0, 0, y, x);
                hazy.at(0, c, y, x) = scene.clean.at(0, c, y, x) * t + a * (1.0 - t);
            }
    }
    return hazy;
}

Tensor invert_haze(const Tensor& hazy, const Tensor& transmission,
                   const std::array<double, 3>& airlight, double t_min) {
    const Shape is = hazy.shape(), ts = transmission.shape();
    if (is.h != ts.h || is.w != ts.w || ts.c != 1)
        throw std::invalid_argument("invert_haze: hazy " + is.str() + " vs transmission " +
                                    ts.str());
    Tensor clean(is);
    for (int64_t c = 0; c < 3; ++c) {
        const double a = airlight[c];
        for (int64_t y = 0; y < is.h; ++y)
            for (int64_t x = 0; x < is.w; ++x) {
                const double t = std::max(transmission.at(0, 0, y, x), t_min);
                clean.at(0, c, y, x) =
                    std::clamp((hazy.at(0, c, y, x) - a * (1.0 - t)) / t, 0.0, 1.0);
            }
    }
    return clean;
}

namespace {

// bilinearly interpolated random lattice, the cheap stand-in for gradient noise
Tensor value_noise(int64_t h, int64_t w, int64_t cells, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    const int64_t gh = cells + 1, gw = cells + 1;
    std::vector<double> grid(gh * gw);
    for (auto& v : grid) v = dist(rng);
    Tensor out(Shape{1, 1, h, w});
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            const double fy = static_cast<double>(y) / (h - 1) * cells;
            const double fx = static_cast<double>(x) / (w - 1) * cells;
            const int64_t y0 = std::min<int64_t>(static_cast<int64_t>(fy), cells - 1);
            const int64_t x0 = std::min<int64_t>(static_cast<int64_t>(fx), cells - 1);
            const double ty = fy - y0, tx = fx - x0;
            const double v00 = grid[y0 * gw + x0], v01 = grid[y0 * gw + x0 + 1];
            const double v10 = grid[(y0 + 1) * gw + x0], v11 = grid[(y0 + 1) * gw + x0 + 1];
            out.at(0, 0, y, x) =
                (1 - ty) * ((1 - tx) * v00 + tx * v01) + ty * ((1 - tx) * v10 + tx * v11);
        }
    return out;
}

Tensor procedural_clean(int64_t h, int64_t w, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Tensor img(Shape{1, 3, h, w});
    // gradient background between two random colors
    double c0[3], c1[3];
    for (int i = 0; i < 3; ++i) {
        c0[i] = unit(rng);
        c1[i] = unit(rng);
    }
    const bool horizontal = unit(rng) < 0.5;
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) {
                const double a = horizontal ? static_cast<double>(x) / (w - 1)
                                            : static_cast<double>(y) / (h - 1);
                img.at(0, c, y, x) = c0[c] * (1 - a) + c1[c] * a;
            }
    // colored shapes give the restoration target edges and texture
    std::uniform_int_distribution<int> nshapes(6, 12);
    const int count = nshapes(rng);
    for (int s = 0; s < count; ++s) {
        double col[3] = {unit(rng), unit(rng), unit(rng)};
        const bool circle = unit(rng) < 0.5;
        const double cy = unit(rng) * h, cx = unit(rng) * w;
        const double ry = (0.05 + 0.2 * unit(rng)) * h, rx = (0.05 + 0.2 * unit(rng)) * w;
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) {
                const double dy = (y - cy) / ry, dx = (x - cx) / rx;
                const bool inside =
                    circle ? dy * dy + dx * dx <= 1.0 : std::abs(dy) <= 1 && std::abs(dx) <= 1;
                if (inside)
                    for (int64_t c = 0; c < 3; ++c) img.at(0, c, y, x) = col[c];
            }
    }
    return img;
}

}  // namespace

HazeScene synth_scene(uint64_t seed, int64_t h, int64_t w, const SynthParams& params) {
    if (h < 16 || w < 16)
        throw std::invalid_argument("synth_scene: dims must be at least 16x16");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    HazeScene scene;
    scene.clean = procedural_clean(h, w, rng);

    // near-gray atmospheric light, componentwise in [0.7, 1.0], spread <= 0.05
    const double base = 0.7 + 0.25 * unit(rng);
    for (int i = 0; i < 3; ++i) scene.airlight[i] = base + 0.05 * unit(rng);

    Tensor depth(Shape{1, 1, h, w});
    switch (params.mode) {
        case TransmissionMode::constant_t: {
            scene.transmission = Tensor(Shape{1, 1, h, w}, params.t0);
            return scene;
        }
        case TransmissionMode::depth_ramp: {
            const bool vertical = unit(rng) < 0.5;
            const bool flip = unit(rng) < 0.5;
            for (int64_t y = 0; y < h; ++y)
                for (int64_t x = 0; x < w; ++x) {
                    double a = vertical ? static_cast<double>(y) / (h - 1)
                                        : static_cast<double>(x) / (w - 1);
                    if (flip) a = 1.0 - a;
                    depth.at(0, 0, y, x) = 2.0 * a;
                }
            break;
        }
        case TransmissionMode::perlin_t: {
            Tensor coarse = value_noise(h, w, 4, rng);
            Tensor fine = value_noise(h, w, 8, rng);
            for (int64_t i = 0; i < depth.numel(); ++i)
                depth[i] = 2.0 * (0.7 * coarse[i] + 0.3 * fine[i]);
            break;
        }
    }
    scene.transmission = Tensor(Shape{1, 1, h, w});
    for (int64_t i = 0; i < depth.numel(); ++i)
        scene.transmission[i] = std::exp(-params.beta * depth[i]);
    return scene;
}

Tensor apply_rain(const Tensor& clean, const RainSpec& spec, uint64_t seed) {
    if (spec.length < 2) throw std::invalid_argument("apply_rain: streak length must be >= 2");
    if (spec.density < 0.0) throw std::invalid_argument("apply_rain: density must be >= 0");
    if (!(spec.intensity > 0.0 && spec.intensity <= 1.0))
        throw std::invalid_argument("apply_rain: intensity must be in (0,1]");
    if (spec.width <= 0.0) throw std::invalid_argument("apply_rain: width must be > 0");
    const Shape s = clean.shape();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    Tensor rainy = clean;
    const int64_t streaks = static_cast<int64_t>(spec.density * s.h * s.w);
    const double rad = spec.angle_deg * M_PI / 180.0;
    const double dy = std::sin(rad), dx = std::cos(rad);
    for (int64_t n = 0; n < s.n; ++n)
        for (int64_t k = 0; k < streaks; ++k) {
            const double y0 = unit(rng) * s.h, x0 = unit(rng) * s.w;
            const double a = spec.intensity * (0.5 + 0.5 * unit(rng));
            // each path point splats a Gaussian cross-section, the motion-blur
            // look; per-pixel max keeps a lone streak within its intensity
            // even where subpixel steps overlap
            const double sigma = spec.width / 2.0;
            const int64_t reach = static_cast<int64_t>(std::ceil(spec.width));
            std::map<int64_t, double> painted;
            for (int64_t step = 0; step < spec.length; ++step) {
                const double py = y0 + step * dy, px = x0 + step * dx;
                // streaks fade toward the tail like motion-blurred drops
                const double v = a * (1.0 - 0.5 * step / (spec.length - 1));
                for (int64_t yy = static_cast<int64_t>(std::floor(py)) - reach;
                     yy <= static_cast<int64_t>(std::floor(py)) + reach + 1; ++yy)
                    for (int64_t xx = static_cast<int64_t>(std::floor(px)) - reach;
                         xx <= static_cast<int64_t>(std::floor(px)) + reach + 1; ++xx) {
                        if (yy < 0 || yy >= s.h || xx < 0 || xx >= s.w) continue;
                        const double d2 = (yy - py) * (yy - py) + (xx - px) * (xx - px);
                        const double w = std::exp(-d2 / (2.0 * sigma * sigma));
                        if (w < 0.05) continue;
                        double& cell = painted[yy * s.w + xx];
                        cell = std::max(cell, v * w);
                    }
            }
            for (const auto& [key, v] : painted)
                for (int64_t c = 0; c < s.c; ++c) {
                    double& px = rainy.at(n, c, key / s.w, key % s.w);
                    px = std::min(1.0, px + v);
                }
        }
    return rainy;
}

namespace {

std::string pair_name(const char* stem, int64_t index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%04lld.png", stem, static_cast<long long>(index));
    return buf;
}

}  // namespace

std::string write_pair_set(const std::string& dir, const PairSetOptions& opt) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("write_pair_set: cannot create " + dir + ": " + ec.message());

    std::ostringstream manifest;
    manifest << "# index\tseed\tmode\tparams\tairlight\tclean\tcorrupted\n";
    for (int64_t i = 0; i < opt.count; ++i) {
        const uint64_t seed = opt.seed + static_cast<uint64_t>(i) * 0x9e3779b97f4a7c15ull;
        const std::string clean_name = pair_name("clean", i);
        const std::string hazy_name = pair_name("hazy", i);
        std::string mode, params, airlight = "-";
        if (opt.kind == CorruptionKind::haze) {
            HazeScene scene = synth_scene(seed, opt.size, opt.size, opt.haze);
            write_png(dir + "/" + clean_name, scene.clean);
            write_png(dir + "/" + hazy_name, apply_haze(scene));
            mode = transmission_mode_name(opt.haze.mode);
            std::ostringstream ps, as;
            ps << "beta=" << opt.haze.beta << ",t0=" << opt.haze.t0;
            as << scene.airlight[0] << "," << scene.airlight[1] << "," << scene.airlight[2];
            params = ps.str();
            airlight = as.str();
        } else {
            HazeScene scene = synth_scene(seed, opt.size, opt.size, opt.haze);
            write_png(dir + "/" + clean_name, scene.clean);
            write_png(dir + "/" + hazy_name, apply_rain(scene.clean, opt.rain, seed));
            mode = "rain";
            std::ostringstream ps;
            ps << "density=" << opt.rain.density << ",length=" << opt.rain.length
               << ",angle=" << opt.rain.angle_deg << ",intensity=" << opt.rain.intensity;
            params = ps.str();
        }
        manifest << i << "\t" << seed << "\t" << mode << "\t" << params << "\t" << airlight
                 << "\t" << clean_name << "\t" << hazy_name << "\n";
    }
    const std::string manifest_path = dir + "/manifest.tsv";
    std::ofstream out(manifest_path, std::ios::trunc);
    if (!out) throw std::runtime_error("write_pair_set: cannot write " + manifest_path);
    out << manifest.str();
    return manifest_path;
}

std::vector<ManifestRow> read_pair_set(const std::string& dir) {
    std::vector<ManifestRow> rows;
    const std::string manifest_path = dir + "/manifest.tsv";
    if (fs::exists(manifest_path)) {
        std::ifstream in(manifest_path);
        if (!in) throw std::runtime_error("read_pair_set: cannot open " + manifest_path);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#') continue;
            std::istringstream is(line);
            ManifestRow row;
            std::string params, airlight;
            if (!(is >> row.index >> row.seed >> row.mode >> params >> airlight >>
                  row.clean_path >> row.corrupted_path))
                throw std::runtime_error("read_pair_set: bad manifest row: " + line);
            row.clean_path = dir + "/" + row.clean_path;
            row.corrupted_path = dir + "/" + row.corrupted_path;
            rows.push_back(std::move(row));
        }
        return rows;
    }
    // external dataset layout: clean/ and corrupted/ with matching filenames
    const fs::path clean_dir = fs::path(dir) / "clean";
    const fs::path corrupted_dir = fs::path(dir) / "corrupted";
    if (!fs::is_directory(clean_dir) || !fs::is_directory(corrupted_dir))
        throw std::runtime_error("read_pair_set: " + dir +
                                 " has neither manifest.tsv nor clean/ + corrupted/ folders");
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(clean_dir))
        if (e.path().extension() == ".png") names.push_back(e.path().filename());
    std::sort(names.begin(), names.end());
    int64_t index = 0;
    for (const auto& name : names) {
        const fs::path partner = corrupted_dir / name;
        if (!fs::exists(partner))
            throw std::runtime_error("read_pair_set: missing corrupted partner for " + name);
        rows.push_back(
            {index++, 0, "external", clean_dir / name, partner});
    }
    return rows;
}

}  // namespace gcanet
