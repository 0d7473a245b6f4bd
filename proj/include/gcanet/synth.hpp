#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "gcanet/tensor.hpp"

namespace gcanet {

// The atmospheric scattering triple: clean radiance, transmission, airlight.
struct HazeScene {
    Tensor clean;         // (1,3,h,w) in [0,1]
    Tensor transmission;  // (1,1,h,w) in (0,1]
    std::array<double, 3> airlight{1.0, 1.0, 1.0};
};

enum class TransmissionMode { constant_t, depth_ramp, perlin_t };

struct SynthParams {
    TransmissionMode mode = TransmissionMode::depth_ramp;
    double beta = 1.2;  // scattering coefficient for t = exp(-beta * depth)
    double t0 = 0.7;    // constant_t level
};

// I(x) = J(x) t(x) + A (1 - t(x))
Tensor apply_haze(const HazeScene& scene);

// J = (I - A(1-t)) / max(t, t_min), clamped to [0,1]
Tensor invert_haze(const Tensor& hazy, const Tensor& transmission,
                   const std::array<double, 3>& airlight, double t_min = 0.05);

// Procedural clean image (gradients + colored shapes) and transmission map.
// Deterministic per seed.
HazeScene synth_scene(uint64_t seed, int64_t h, int64_t w, const SynthParams& params);

struct RainSpec {
    double density = 0.003;  // streak seeds per pixel
    int64_t length = 9;      // pixels, >= 2
    double angle_deg = 70.0;
    double intensity = 0.6;  // in (0,1]
    double width = 2.5;      // Gaussian cross-section, full width in pixels
};

// additive bright streaks along the given angle, clamped to [0,1]
Tensor apply_rain(const Tensor& clean, const RainSpec& spec, uint64_t seed);

enum class CorruptionKind { haze, rain };

struct PairSetOptions {
    int64_t count = 16;
    int64_t size = 64;
    CorruptionKind kind = CorruptionKind::haze;
    SynthParams haze;
    RainSpec rain;
    uint64_t seed = 7;
};

// Writes clean_XXXX.png / hazy_XXXX.png pairs plus a TSV manifest
// (index, seed, mode, t-params, airlight). Returns the manifest path.
std::string write_pair_set(const std::string& dir, const PairSetOptions& opt);

struct ManifestRow {
    int64_t index;
    uint64_t seed;
    std::string mode;
    std::string clean_path;
    std::string corrupted_path;
};

// Reads a manifest, or falls back to paired clean/ and corrupted/ folders with
// matching filenames when the directory has no manifest.
std::vector<ManifestRow> read_pair_set(const std::string& dir);

std::string transmission_mode_name(TransmissionMode m);
TransmissionMode transmission_mode_from(const std::string& name);

}  // namespace gcanet
