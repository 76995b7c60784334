#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace cdanet {

struct Fold {
    std::vector<std::string> train_ids;
    std::vector<std::string> val_ids;
};

/// Seeded shuffle cut into n contiguous validation blocks whose sizes differ
/// by at most one. Each id validates exactly once.
inline std::vector<Fold> split_folds(const std::vector<std::string>& case_ids, int n_folds, std::uint64_t seed) {
    if (n_folds < 2) throw std::invalid_argument("n_folds must be at least 2");
    if (std::size_t(n_folds) > case_ids.size())
        throw std::invalid_argument("cannot split " + std::to_string(case_ids.size()) + " cases into " +
                                    std::to_string(n_folds) + " folds");
    if (std::set<std::string>(case_ids.begin(), case_ids.end()).size() != case_ids.size())
        throw std::invalid_argument("case ids must be unique");

    std::vector<std::string> ids = case_ids;
    std::sort(ids.begin(), ids.end());
    std::mt19937_64 rng(seed);
    std::shuffle(ids.begin(), ids.end(), rng);

    const std::size_t n = ids.size(), k = std::size_t(n_folds);
    std::vector<Fold> folds(k);
    std::size_t begin = 0;
    for (std::size_t f = 0; f < k; ++f) {
        const std::size_t len = n / k + (f < n % k ? 1 : 0);
        for (std::size_t i = 0; i < n; ++i)
            (i >= begin && i < begin + len ? folds[f].val_ids : folds[f].train_ids).push_back(ids[i]);
        begin += len;
    }
    return folds;
}

}  // namespace cdanet
