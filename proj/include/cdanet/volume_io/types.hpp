#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cdanet/core/tensor.hpp"

namespace cdanet {

/// Voxel size in millimetres, (D,H,W) order.
struct Spacing {
    double d = 1, h = 1, w = 1;
    bool operator==(const Spacing&) const = default;
};

/// Scalar image; Hounsfield units before windowing, [0,1] after.
struct IntensityVolume {
    Tensor<float> voxels;  // (D,H,W)
    Spacing spacing;

    Grid3 grid() const { return voxels.grid(); }

    void validate() const {
        if (voxels.rank() != 3) throw std::invalid_argument("intensity volume must be 3D, got " + shape_str(voxels.shape()));
        if (!(spacing.d > 0 && spacing.h > 0 && spacing.w > 0)) throw std::invalid_argument("voxel spacing must be positive");
        if (!all_finite(voxels)) throw std::invalid_argument("intensity volume contains non-finite values");
    }
};

/// Ordered structure-name -> dataset-code mapping. Class index of the i-th
/// entry is i + 1; index 0 is background.
class LabelMap {
public:
    LabelMap() = default;
    explicit LabelMap(std::vector<std::pair<std::string, std::int32_t>> entries) : entries_(std::move(entries)) {
        std::set<std::string> names;
        std::set<std::int32_t> codes;
        for (const auto& [n, c] : entries_) {
            if (n.empty()) throw std::invalid_argument("label map: empty structure name");
            if (c == 0) throw std::invalid_argument("label map: code 0 is reserved for background (" + n + ")");
            if (!names.insert(n).second) throw std::invalid_argument("label map: duplicate structure " + n);
            if (!codes.insert(c).second) throw std::invalid_argument("label map: duplicate code " + std::to_string(c));
        }
    }

    /// Conventional MM-WHS codes for the seven cardiac substructures.
    static LabelMap mmwhs_default() {
        return LabelMap({{"LV", 500}, {"RV", 600}, {"LA", 420}, {"RA", 550}, {"LV-myo", 205}, {"AA", 820}, {"PA", 850}});
    }

    /// First `n` structures of the default map.
    static LabelMap default_prefix(int n) {
        auto all = mmwhs_default().entries_;
        if (n < 1 || n > int(all.size()))
            throw std::invalid_argument("default label map has " + std::to_string(all.size()) + " structures");
        all.resize(std::size_t(n));
        return LabelMap(std::move(all));
    }

    int size() const { return int(entries_.size()); }
    const std::vector<std::pair<std::string, std::int32_t>>& entries() const { return entries_; }
    const std::string& name(int cls) const { return entries_.at(std::size_t(cls - 1)).first; }
    std::int32_t code(int cls) const { return cls == 0 ? 0 : entries_.at(std::size_t(cls - 1)).second; }

    /// Class index for a code, or -1 if unmapped.
    int class_of(std::int32_t code) const {
        if (code == 0) return 0;
        for (std::size_t i = 0; i < entries_.size(); ++i)
            if (entries_[i].second == code) return int(i) + 1;
        return -1;
    }

    bool operator==(const LabelMap&) const = default;

    /// `name = code` per line; '#' starts a comment.
    static LabelMap parse(std::string_view text) {
        std::vector<std::pair<std::string, std::int32_t>> entries;
        std::istringstream in{std::string(text)};
        std::string line;
        int lineno = 0;
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        while (std::getline(in, line)) {
            ++lineno;
            if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
            line = trim(line);
            if (line.empty()) continue;
            const auto eq = line.find_first_of("=:");
            if (eq == std::string::npos)
                throw std::invalid_argument("label map line " + std::to_string(lineno) + ": expected 'name = code'");
            const std::string name = trim(line.substr(0, eq));
            const std::string val = trim(line.substr(eq + 1));
            std::size_t used = 0;
            long code = 0;
            try {
                code = std::stol(val, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used == 0 || used != val.size())
                throw std::invalid_argument("label map line " + std::to_string(lineno) + ": bad code '" + val + "'");
            entries.emplace_back(name, std::int32_t(code));
        }
        return LabelMap(std::move(entries));
    }

    std::string serialize() const {
        std::string s;
        for (const auto& [n, c] : entries_) s += n + " = " + std::to_string(c) + "\n";
        return s;
    }

    static LabelMap load(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw std::runtime_error("cannot open label map " + path);
        std::stringstream ss;
        ss << f.rdbuf();
        return parse(ss.str());
    }
    void save(const std::string& path) const {
        std::ofstream f(path);
        if (!f) throw std::runtime_error("cannot write label map " + path);
        f << serialize();
    }

private:
    std::vector<std::pair<std::string, std::int32_t>> entries_;
};

/// Integer structure codes aligned with an intensity volume.
struct LabelVolume {
    Tensor<std::int32_t> voxels;  // (D,H,W) dataset codes
    LabelMap label_map;
    Spacing spacing;

    Grid3 grid() const { return voxels.grid(); }

    /// Codes present in the volume that the map does not know.
    std::vector<std::int32_t> unknown_codes() const {
        std::set<std::int32_t> bad;
        for (auto v : voxels.values())
            if (label_map.class_of(v) < 0) bad.insert(v);
        return {bad.begin(), bad.end()};
    }

    void validate() const {
        if (voxels.rank() != 3) throw std::invalid_argument("label volume must be 3D");
        auto bad = unknown_codes();
        if (!bad.empty()) {
            std::string s;
            for (auto c : bad) s += (s.empty() ? "" : ", ") + std::to_string(c);
            throw std::invalid_argument("label volume contains codes not in the label map: " + s);
        }
    }

    /// Contiguous class indices (0 = background).
    Tensor<std::int32_t> class_indices() const {
        Tensor<std::int32_t> out(voxels.shape());
        for (std::size_t i = 0; i < voxels.size(); ++i) {
            const int c = label_map.class_of(voxels[i]);
            if (c < 0) throw std::invalid_argument("unmapped label code " + std::to_string(voxels[i]));
            out[i] = c;
        }
        return out;
    }

    static LabelVolume from_class_indices(const Tensor<std::int32_t>& cls, const LabelMap& map, Spacing sp = {}) {
        LabelVolume lv{Tensor<std::int32_t>(cls.shape()), map, sp};
        for (std::size_t i = 0; i < cls.size(); ++i) lv.voxels[i] = map.code(cls[i]);
        return lv;
    }
};

/// What a channel stack holds; decides its value-range contract.
enum class MapRole { OneHot, Probability, Contour, Distance };

inline const char* role_name(MapRole r) {
    switch (r) {
        case MapRole::OneHot: return "onehot";
        case MapRole::Probability: return "probability";
        case MapRole::Contour: return "contour";
        case MapRole::Distance: return "distance";
    }
    return "?";
}

/// N x D x H x W per-structure maps with a declared role.
struct ChannelMapStack {
    Tensor<float> values;
    MapRole role = MapRole::OneHot;

    int channels() const { return values.channels(); }
    Grid3 grid() const { return values.grid(); }

    void require_role(MapRole r, const char* op) const {
        if (role != r)
            throw std::invalid_argument(std::string(op) + " expects a " + role_name(r) + " stack, got " + role_name(role));
    }

    void validate() const {
        if (values.rank() != 4) throw std::invalid_argument("channel stack must be 4D");
        const std::size_t n = values.grid().numel();
        const int C = values.channels();
        switch (role) {
            case MapRole::OneHot:
                for (std::size_t i = 0; i < n; ++i) {
                    float s = 0;
                    for (int c = 0; c < C; ++c) {
                        const float v = values[c * n + i];
                        if (v != 0.f && v != 1.f) throw std::invalid_argument("one-hot stack has non-binary value");
                        s += v;
                    }
                    if (s > 1.f) throw std::invalid_argument("one-hot stack has overlapping channels");
                }
                break;
            case MapRole::Probability:
            case MapRole::Contour:
                for (float v : values.values())
                    if (!(v >= 0.f && v <= 1.f)) throw std::invalid_argument("stack values must lie in [0,1]");
                break;
            case MapRole::Distance:
                for (float v : values.values())
                    if (!(v >= 0.f) || !std::isfinite(v)) throw std::invalid_argument("distance values must be >= 0");
                break;
        }
    }
};

/// Which tensor of the attention pathway a feature map is.
enum class FeatureRole { Input, Contour, Distance, Output, Attention };

/// C x D x H x W activation detached from the graph, e.g. for export.
struct FeatureMap {
    Tensor<float> values;
    FeatureRole role = FeatureRole::Input;

    int channels() const { return values.channels(); }
    Grid3 grid() const { return values.grid(); }
};

}  // namespace cdanet
