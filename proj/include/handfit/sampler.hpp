#pragma once

// Batch sampler over a sequence dataset: m = budget / n sequences, n distinct
// frames each, frames time-ordered within each group.

#include <handfit/core.hpp>

#include <vector>

namespace handfit {

struct BatchGroup {
    int sequence = 0;
    std::vector<int> frames;  // ascending
};

struct Batch {
    std::vector<BatchGroup> groups;
    int excluded_sequences = 0;  // sequences shorter than n, skipped
};

inline Batch sample_batch(const std::vector<int>& frames_per_sequence, int n, Rng& rng,
                          int budget = 64) {
    if (frames_per_sequence.empty()) throw std::invalid_argument("sample_batch: empty dataset");
    if (n < 1) throw std::invalid_argument("sample_batch: n must be positive");
    if (budget < n) throw std::invalid_argument("sample_batch: budget below n");

    std::vector<int> eligible;
    for (int s = 0; s < int(frames_per_sequence.size()); ++s) {
        if (frames_per_sequence[std::size_t(s)] >= n)
            eligible.push_back(s);
    }
    if (eligible.empty())
        throw std::invalid_argument("sample_batch: no sequence holds enough frames");

    Batch out;
    out.excluded_sequences = int(frames_per_sequence.size()) - int(eligible.size());

    int m = budget / n;
    std::vector<int> chosen;
    if (int(eligible.size()) >= m) {
        for (int idx : rng.sample_without_replacement(int(eligible.size()), m))
            chosen.push_back(eligible[std::size_t(idx)]);
    } else {
        // fewer sequences than groups: fall back to replacement
        for (int k = 0; k < m; ++k)
            chosen.push_back(eligible[std::size_t(rng.below(eligible.size()))]);
    }

    for (int s : chosen) {
        BatchGroup g;
        g.sequence = s;
        g.frames = rng.sample_without_replacement(frames_per_sequence[std::size_t(s)], n);
        out.groups.push_back(std::move(g));
    }
    return out;
}

}  // namespace handfit
