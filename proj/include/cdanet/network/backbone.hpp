#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "cdanet/network/layers.hpp"

namespace cdanet {

/// Features the segmentation heads draw from the U-Net.
template <class T>
struct BackboneFeatures {
    Var<T> low;   // shallowest encoder stage, full resolution
    Var<T> high;  // deepest encoder stage, upsampled to full resolution
    Var<T> dec;   // last decoder stage, full resolution
};

/// 3D U-Net: `depth` max-pool downsamplings, two conv blocks per level,
/// channel count doubling per level, trilinear upsampling with skip concatenation.
template <class T>
class UNetBackbone {
public:
    UNetBackbone() = default;
    UNetBackbone(ParameterRegistry<T>& reg, int in_channels, int base_channels, int depth) : depth_(depth) {
        if (depth < 1) throw std::invalid_argument("backbone depth must be at least 1");
        if (base_channels < 1) throw std::invalid_argument("base_channels must be positive");
        int cin = in_channels;
        for (int l = 0; l <= depth; ++l) {
            const int c = base_channels << l;
            const std::string n = "backbone.enc" + std::to_string(l);
            encoder_.push_back({ConvNormAct<T>(reg, n + ".a", cin, c), ConvNormAct<T>(reg, n + ".b", c, c)});
            cin = c;
        }
        for (int l = depth - 1; l >= 0; --l) {
            const int c = base_channels << l;
            const std::string n = "backbone.dec" + std::to_string(l);
            decoder_.push_back({ConvNormAct<T>(reg, n + ".a", 2 * c + c, c), ConvNormAct<T>(reg, n + ".b", c, c)});
        }
        low_channels_ = base_channels;
        high_channels_ = base_channels << depth;
    }

    int depth() const { return depth_; }
    int low_channels() const { return low_channels_; }
    int high_channels() const { return high_channels_; }
    int dec_channels() const { return low_channels_; }

    BackboneFeatures<T> forward(const Var<T>& x) const {
        const Grid3 g = x->value.grid();
        const int m = 1 << depth_;
        if (g.d % m || g.h % m || g.w % m)
            throw std::invalid_argument("input grid " + grid_str(g) + " not divisible by 2^depth = " + std::to_string(m));
        std::vector<Var<T>> skips;
        Var<T> h = x;
        for (int l = 0; l <= depth_; ++l) {
            if (l > 0) h = ops::max_pool2(h);
            h = encoder_[l].second(encoder_[l].first(h));
            skips.push_back(h);
        }
        Var<T> deepest = h;
        for (int i = 0; i < depth_; ++i) {
            const Var<T>& skip = skips[depth_ - 1 - i];
            h = ops::concat<T>({skip, ops::resize(h, skip->value.grid())});
            h = decoder_[i].second(decoder_[i].first(h));
        }
        return {skips.front(), ops::resize(deepest, g), h};
    }

private:
    int depth_ = 0;
    int low_channels_ = 0, high_channels_ = 0;
    std::vector<std::pair<ConvNormAct<T>, ConvNormAct<T>>> encoder_;
    std::vector<std::pair<ConvNormAct<T>, ConvNormAct<T>>> decoder_;
};

}  // namespace cdanet
