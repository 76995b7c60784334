#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cdanet/volume_io/types.hpp"

namespace cdanet {

/// Synthetic multi-compartment volume: an inner core ellipsoid wrapped by a
/// shell cut into angular sectors. Adjacent compartments differ in mean
/// intensity by less than the noise level.
struct Phantom {
    IntensityVolume image;
    LabelVolume labels;
    std::vector<std::pair<int, int>> adjacent;  // class-index pairs that share a boundary by construction
};

struct PhantomStyle {
    double background_hu = -60;
    double tissue_hu = 200;
    double compartment_step_hu = 30;  // mean offset between neighbouring compartments
    double noise_hu = 25;
    double core_fraction = 0.5;       // core radius relative to the outer ellipsoid
};

inline Phantom generate_phantom(std::uint64_t seed, Grid3 size, int n_structures, const PhantomStyle& style = {}) {
    if (n_structures < 2) throw std::invalid_argument("phantom needs at least 2 structures");
    if (size.d < 16 || size.h < 16 || size.w < 16)
        throw std::invalid_argument("phantom size must be at least 16 voxels per axis, got " + grid_str(size));
    const LabelMap map = LabelMap::default_prefix(n_structures);

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    auto jitter = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };

    const double cd = size.d / 2.0 - 0.5 + jitter(-0.05, 0.05) * size.d;
    const double ch = size.h / 2.0 - 0.5 + jitter(-0.05, 0.05) * size.h;
    const double cw = size.w / 2.0 - 0.5 + jitter(-0.05, 0.05) * size.w;
    const double rd = jitter(0.30, 0.38) * size.d;
    const double rh = jitter(0.30, 0.38) * size.h;
    const double rw = jitter(0.30, 0.38) * size.w;
    const double core = style.core_fraction * jitter(0.9, 1.1);
    const double theta0 = jitter(-0.26, 0.26);  // about +-15 degrees
    const double tilt = jitter(-0.5, 0.5);

    const int sectors = n_structures - 1;
    std::vector<double> bounds(std::size_t(sectors) + 1, 0.0);
    {
        std::vector<double> w(static_cast<std::size_t>(sectors));
        double total = 0;
        for (auto& x : w) total += (x = jitter(0.75, 1.25));
        for (int k = 0; k < sectors; ++k) bounds[k + 1] = bounds[k] + 2 * std::numbers::pi * w[k] / total;
    }

    Phantom ph;
    ph.labels = LabelVolume{Tensor<std::int32_t>::volume(size), map, {}};
    ph.image = IntensityVolume{Tensor<float>::volume(size), {}};
    std::vector<double> means(std::size_t(n_structures) + 1);
    means[0] = style.background_hu;
    for (int k = 1; k <= n_structures; ++k)
        means[k] = style.tissue_hu + style.compartment_step_hu * ((k % 2) ? 0.5 : -0.5);

    std::normal_distribution<double> noise(0.0, style.noise_hu);
    std::vector<std::size_t> counts(std::size_t(n_structures) + 1, 0);
    for (int d = 0; d < size.d; ++d)
        for (int h = 0; h < size.h; ++h)
            for (int w = 0; w < size.w; ++w) {
                const double ud = (d - cd) / rd, uh = (h - ch) / rh, uw = (w - cw) / rw;
                const double r = std::sqrt(ud * ud + uh * uh + uw * uw);
                int cls = 0;
                if (r <= core) {
                    cls = 1;
                } else if (r <= 1.0) {
                    double phi = std::atan2(uh, uw) - theta0 + tilt * ud;
                    phi = std::fmod(phi, 2 * std::numbers::pi);
                    if (phi < 0) phi += 2 * std::numbers::pi;
                    int k = 0;
                    while (k < sectors - 1 && phi >= bounds[k + 1]) ++k;
                    cls = 2 + k;
                }
                ++counts[cls];
                ph.labels.voxels.at(d, h, w) = map.code(cls);
                ph.image.voxels.at(d, h, w) = static_cast<float>(means[cls] + noise(rng));
            }
    for (int k = 1; k <= n_structures; ++k)
        if (counts[k] == 0)
            throw std::invalid_argument("phantom grid " + grid_str(size) + " too small to fit " +
                                        std::to_string(n_structures) + " structures");

    for (int k = 2; k <= n_structures; ++k) ph.adjacent.emplace_back(1, k);
    for (int k = 0; k + 1 < sectors; ++k) ph.adjacent.emplace_back(2 + k, 3 + k);
    if (sectors > 2) ph.adjacent.emplace_back(2, 1 + sectors);
    return ph;
}

}  // namespace cdanet
