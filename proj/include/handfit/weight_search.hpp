#pragma once

// Divide-and-conquer grid search over loss-group weights. Groups are fixed
// in protocol order: the first keeps weight 1; each later group starts at
// the power of ten matching the magnitude of the already-determined weighted
// loss sum, then scans up and down by the factor while that sum keeps
// decreasing.

#include <handfit/losses.hpp>

#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace handfit {

struct WeightGroup {
    std::string name;
    std::function<void(LossWeights&, double)> apply;  // install a candidate weight
    std::function<double(const LossBreakdown&)> raw;  // read the group's raw loss
};

struct WeightSearchEntry {
    std::string group;
    double weight = 0;
    double determined_sum = 0;  // weighted sum of the already-determined groups
    bool failed = false;        // probe produced a non-finite loss
    bool selected = false;
};

struct WeightSearchResult {
    LossWeights weights;           // base with every searched group installed
    std::vector<double> selected;  // chosen weight per group, protocol order
    std::vector<WeightSearchEntry> table;
};

// initial candidate: 10^round(log10(determined_sum / raw))
inline double magnitude_matched_weight(double determined_sum, double raw) {
    if (!(determined_sum > 0.0) || !(raw > 0.0) || !std::isfinite(determined_sum) ||
        !std::isfinite(raw))
        return 1.0;
    return std::pow(10.0, std::round(std::log10(determined_sum / raw)));
}

inline WeightSearchResult grid_search_weights(
    const std::vector<WeightGroup>& groups,
    const std::function<LossBreakdown(const LossWeights&)>& evaluate,
    const LossWeights& base = LossWeights{}, double factor = 10.0) {
    if (groups.empty()) throw std::invalid_argument("weight search: no groups given");
    if (!(factor > 1.0)) throw std::invalid_argument("weight search: factor must exceed 1");
    for (const WeightGroup& g : groups)
        if (!g.apply || !g.raw) throw std::invalid_argument("weight search: group lacks hooks");

    const int n = int(groups.size());
    WeightSearchResult out;
    out.selected.assign(std::size_t(n), 0.0);
    out.selected[0] = 1.0;

    auto weights_with = [&](int upto, double candidate) {
        LossWeights w = base;
        for (int j = 0; j < n; ++j) groups[std::size_t(j)].apply(w, 0.0);
        for (int j = 0; j < upto; ++j) groups[std::size_t(j)].apply(w, out.selected[std::size_t(j)]);
        if (upto < n) groups[std::size_t(upto)].apply(w, candidate);
        return w;
    };

    // determined sum of groups [0, upto) under one probe
    auto determined_sum = [&](int upto, const LossBreakdown& bd) {
        double s = 0.0;
        for (int j = 0; j < upto; ++j)
            s += out.selected[std::size_t(j)] * groups[std::size_t(j)].raw(bd);
        return s;
    };

    {
        LossBreakdown bd = evaluate(weights_with(0, 1.0));
        WeightSearchEntry e;
        e.group = groups[0].name;
        e.weight = 1.0;
        e.determined_sum = groups[0].raw(bd);
        e.failed = !std::isfinite(e.determined_sum);
        e.selected = true;
        out.table.push_back(e);
    }

    for (int k = 1; k < n; ++k) {
        // magnitude probe with the new group switched off
        LossBreakdown bd0 = evaluate(weights_with(k, 0.0));
        double s_det = determined_sum(k, bd0);
        double raw_k = groups[std::size_t(k)].raw(bd0);
        double w_init = magnitude_matched_weight(s_det, raw_k);

        std::size_t first_row = out.table.size();
        double best_w = 0.0;
        double best_s = std::numeric_limits<double>::infinity();
        auto try_candidate = [&](double wv) {
            LossBreakdown bd = evaluate(weights_with(k, wv));
            WeightSearchEntry e;
            e.group = groups[std::size_t(k)].name;
            e.weight = wv;
            e.determined_sum = determined_sum(k, bd);
            e.failed = !std::isfinite(e.determined_sum);
            out.table.push_back(e);
            double s = e.failed ? std::numeric_limits<double>::infinity() : e.determined_sum;
            if (s < best_s) {
                best_s = s;
                best_w = wv;
            }
            return s;
        };

        double s_init = try_candidate(w_init);
        double prev = s_init;
        for (double wv = w_init * factor;; wv *= factor) {
            double s = try_candidate(wv);
            if (!(s < prev)) break;  // stops once the determined sum stops decreasing
            prev = s;
        }
        prev = s_init;
        for (double wv = w_init / factor;; wv /= factor) {
            double s = try_candidate(wv);
            if (!(s < prev)) break;
            prev = s;
        }

        if (!std::isfinite(best_s))
            throw std::runtime_error("weight search: every candidate failed for group " +
                                     groups[std::size_t(k)].name);
        out.selected[std::size_t(k)] = best_w;
        for (std::size_t r = first_row; r < out.table.size(); ++r)
            out.table[r].selected = out.table[r].weight == best_w && !out.table[r].failed;
    }

    out.weights = weights_with(n, 0.0);
    return out;
}

inline std::string weight_search_table(const WeightSearchResult& result) {
    std::ostringstream os;
    os << "group          weight  determined_sum  status\n";
    for (const WeightSearchEntry& e : result.table) {
        os << e.group;
        for (std::size_t i = e.group.size(); i < 14; ++i) os << ' ';
        os << ' ' << e.weight << "  " << e.determined_sum << "  "
           << (e.failed ? "failed" : (e.selected ? "selected" : "")) << "\n";
    }
    return os.str();
}

// protocol-ordered groups over the fitting objective: keypoint location
// first (fixed), then bone orientation, regularizers, photometric
inline std::vector<WeightGroup> default_weight_groups() {
    std::vector<WeightGroup> g;
    g.push_back({"loc", [](LossWeights&, double) {},
                 [](const LossBreakdown& b) { return b.loc; }});
    g.push_back({"ori", [](LossWeights& w, double v) { w.w_ori = v; },
                 [](const LossBreakdown& b) { return b.ori; }});
    g.push_back({"regu", [](LossWeights& w, double v) { w.w_regu = v; },
                 [](const LossBreakdown& b) { return b.regu; }});
    g.push_back({"photo", [](LossWeights& w, double v) { w.w_photo = v; },
                 [](const LossBreakdown& b) { return b.photo; }});
    return g;
}

}  // namespace handfit
