#include "kenn/exact_ot.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>

#include "kenn/error.hpp"

namespace kenn {

namespace {

constexpr int64_t kMassScale = 1'000'000'000;  // 1e-9 quantization of unit mass

struct ActiveSide {
    std::vector<int> pixel;    // grid index per active node
    std::vector<int64_t> mass; // integral mass per node, sums to kMassScale
};

// Round weights to integral units with largest-remainder apportionment so
// the side sums exactly to kMassScale and every entry stays within one
// 1e-9 unit of its weight (keeps plan marginals inside the stated
// tolerance). Pixels whose weight rounds to zero are dropped.
ActiveSide quantize(const std::vector<double>& weights) {
    struct Entry {
        int pixel;
        int64_t floor_mass;
        double remainder;
    };
    std::vector<Entry> entries;
    int64_t total = 0;
    for (size_t i = 0; i < weights.size(); ++i) {
        if (weights[i] <= 0.0) continue;
        const double scaled = weights[i] * static_cast<double>(kMassScale);
        const auto fl = static_cast<int64_t>(scaled);
        entries.push_back({static_cast<int>(i), fl, scaled - static_cast<double>(fl)});
        total += fl;
    }
    int64_t deficit = kMassScale - total;
    if (entries.empty() || deficit < 0)
        throw data_error("degenerate measure: no pixel carries mass above 1e-9");

    // +1 unit to the largest remainders (ties -> lowest pixel index)
    std::vector<int> order(entries.size());
    for (size_t k = 0; k < entries.size(); ++k) order[k] = static_cast<int>(k);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return entries[static_cast<size_t>(a)].remainder != entries[static_cast<size_t>(b)].remainder
                   ? entries[static_cast<size_t>(a)].remainder > entries[static_cast<size_t>(b)].remainder
                   : a < b;
    });
    for (size_t k = 0; deficit > 0 && k < order.size(); ++k, --deficit)
        entries[static_cast<size_t>(order[k])].floor_mass += 1;
    if (deficit > 0)
        throw data_error("degenerate measure: mass quantization failed");

    ActiveSide side;
    for (const auto& e : entries) {
        if (e.floor_mass <= 0) continue;
        side.pixel.push_back(e.pixel);
        side.mass.push_back(e.floor_mass);
    }
    if (side.pixel.empty())
        throw data_error("degenerate measure: no pixel carries mass above 1e-9");
    return side;
}

// Primal-dual min-cost flow on the complete bipartite graph, integer costs
// and flows. Each phase runs one multi-source Dijkstra under reduced costs
// (dense scans beat a heap on complete bipartite graphs), lifts the
// potentials, and then saturates the zero-reduced-cost admissible subgraph
// with DFS augmentations. Lowest-index tie-breaks everywhere keep the
// result deterministic.
class TransportSolver {
public:
    TransportSolver(const ActiveSide& src, const ActiveSide& dst, const GroundCost& cost)
        : ns_(static_cast<int>(src.pixel.size())),
          nt_(static_cast<int>(dst.pixel.size())),
          cost_(static_cast<size_t>(ns_) * nt_),
          flow_(static_cast<size_t>(ns_) * nt_, 0),
          supply_(src.mass),
          demand_(dst.mass),
          potential_(ns_ + nt_, 0),
          flow_sources_(static_cast<size_t>(nt_)) {
        for (int i = 0; i < ns_; ++i) {
            const double* row = cost.entries.data() + static_cast<size_t>(src.pixel[i]) * cost.size();
            for (int j = 0; j < nt_; ++j)
                cost_[static_cast<size_t>(i) * nt_ + j] = std::llround(row[dst.pixel[j]]);
        }
    }

    // Returns the optimal total cost in (mass unit x pixel^2) units.
    int64_t solve() {
        int64_t remaining = std::accumulate(supply_.begin(), supply_.end(), int64_t{0});
        const int64_t max_phases = 100 * static_cast<int64_t>(ns_ + nt_) + 1000;
        int64_t phases = 0;
        while (remaining > 0) {
            if (++phases > max_phases)
                throw data_error("infeasible: transport solver failed to converge (internal error)");
            dijkstra_and_lift();
            remaining -= saturate_admissible();
        }
        int64_t total = 0;
        for (size_t a = 0; a < flow_.size(); ++a) total += flow_[a] * cost_[a];
        return total;
    }

    int64_t flow(int i, int j) const { return flow_[static_cast<size_t>(i) * nt_ + j]; }

private:
    static constexpr int64_t kInf = std::numeric_limits<int64_t>::max() / 4;

    // Multi-source Dijkstra to the nearest deficient sink; potentials are
    // lifted by min(dist, dist_target), which preserves nonnegative reduced
    // costs on all residual arcs and keeps flow-carrying arcs tight.
    void dijkstra_and_lift() {
        const int v = ns_ + nt_;
        dist_.assign(v, kInf);
        settled_.assign(v, 0);

        for (int i = 0; i < ns_; ++i) {
            if (supply_[i] <= 0) continue;
            dist_[i] = 0;
            settled_[i] = 1;  // zero-distance origins need no separate pops
            const int64_t* crow = cost_.data() + static_cast<size_t>(i) * nt_;
            const int64_t pu = potential_[i];
            int64_t* dsink = dist_.data() + ns_;
            for (int j = 0; j < nt_; ++j) {
                const int64_t nd = crow[j] + pu - potential_[ns_ + j];
                assert(nd >= 0);
                if (nd < dsink[j]) dsink[j] = nd;
            }
        }

        int64_t dt = -1;
        for (;;) {
            int u = -1;
            int64_t best = kInf;
            for (int k = 0; k < v; ++k)
                if (!settled_[k] && dist_[k] < best) {
                    best = dist_[k];
                    u = k;
                }
            if (u < 0)
                throw data_error("infeasible: no augmenting path (internal error)");
            settled_[u] = 1;
            if (u >= ns_ && demand_[u - ns_] > 0) {
                dt = dist_[u];
                break;
            }
            if (u < ns_) {
                const int64_t* crow = cost_.data() + static_cast<size_t>(u) * nt_;
                const int64_t du = dist_[u];
                const int64_t pu = potential_[u];
                for (int j = 0; j < nt_; ++j) {
                    const int node = ns_ + j;
                    if (settled_[node]) continue;
                    const int64_t rc = crow[j] + pu - potential_[node];
                    assert(rc >= 0);
                    if (du + rc < dist_[node]) dist_[node] = du + rc;
                }
            } else {
                const int j = u - ns_;
                const int64_t du = dist_[u];
                const int64_t pu = potential_[u];
                for (const int i : flow_sources_[static_cast<size_t>(j)]) {
                    if (settled_[i] || flow_[static_cast<size_t>(i) * nt_ + j] <= 0) continue;
                    const int64_t rc = -cost_[static_cast<size_t>(i) * nt_ + j] + pu - potential_[i];
                    assert(rc >= 0);
                    if (du + rc < dist_[i]) dist_[i] = du + rc;
                }
            }
        }

        for (int k = 0; k < v; ++k)
            potential_[k] += std::min(dist_[k], dt);
    }

    // DFS augmentations over arcs with zero reduced cost until no supplied
    // source reaches a deficient sink. Returns the total mass pushed.
    int64_t saturate_admissible() {
        // static admissible arc set for this phase
        adm_fwd_.assign(static_cast<size_t>(ns_), {});
        for (int i = 0; i < ns_; ++i) {
            const int64_t* crow = cost_.data() + static_cast<size_t>(i) * nt_;
            const int64_t pu = potential_[i];
            for (int j = 0; j < nt_; ++j)
                if (crow[j] + pu - potential_[ns_ + j] == 0)
                    adm_fwd_[static_cast<size_t>(i)].push_back(j);
        }

        int64_t pushed_total = 0;
        // path as alternating (source, sink) pairs; parents recorded per DFS
        std::vector<int> src_parent_sink(static_cast<size_t>(ns_));
        std::vector<int> sink_parent_src(static_cast<size_t>(nt_));
        std::vector<char> src_seen(static_cast<size_t>(ns_)), sink_seen(static_cast<size_t>(nt_));

        for (int s = 0; s < ns_; ++s) {
            while (supply_[s] > 0) {
                std::fill(src_seen.begin(), src_seen.end(), 0);
                std::fill(sink_seen.begin(), sink_seen.end(), 0);
                // iterative DFS; stack holds source nodes to expand
                std::vector<int> stack{s};
                src_seen[static_cast<size_t>(s)] = 1;
                src_parent_sink[static_cast<size_t>(s)] = -1;
                int found_sink = -1;
                while (!stack.empty() && found_sink < 0) {
                    const int u = stack.back();
                    stack.pop_back();
                    for (const int j : adm_fwd_[static_cast<size_t>(u)]) {
                        if (sink_seen[static_cast<size_t>(j)]) continue;
                        sink_seen[static_cast<size_t>(j)] = 1;
                        sink_parent_src[static_cast<size_t>(j)] = u;
                        if (demand_[j] > 0) {
                            found_sink = j;
                            break;
                        }
                        // continue through backward arcs carrying flow
                        auto& holders = flow_sources_[static_cast<size_t>(j)];
                        for (size_t h = 0; h < holders.size();) {
                            const int i = holders[h];
                            if (flow_[static_cast<size_t>(i) * nt_ + j] <= 0) {
                                holders[h] = holders.back();  // lazy cleanup
                                holders.pop_back();
                                continue;
                            }
                            ++h;
                            if (src_seen[static_cast<size_t>(i)]) continue;
                            src_seen[static_cast<size_t>(i)] = 1;
                            src_parent_sink[static_cast<size_t>(i)] = j;
                            stack.push_back(i);
                        }
                    }
                }
                if (found_sink < 0) break;

                // bottleneck along the alternating path
                int64_t delta = std::min(supply_[s], demand_[found_sink]);
                for (int j = found_sink;;) {
                    const int i = sink_parent_src[static_cast<size_t>(j)];
                    const int pj = src_parent_sink[static_cast<size_t>(i)];
                    if (pj < 0) break;
                    delta = std::min(delta, flow_[static_cast<size_t>(i) * nt_ + pj]);
                    j = pj;
                }
                assert(delta > 0);
                for (int j = found_sink;;) {
                    const int i = sink_parent_src[static_cast<size_t>(j)];
                    auto& f = flow_[static_cast<size_t>(i) * nt_ + j];
                    if (f == 0) flow_sources_[static_cast<size_t>(j)].push_back(i);
                    f += delta;
                    const int pj = src_parent_sink[static_cast<size_t>(i)];
                    if (pj < 0) break;
                    flow_[static_cast<size_t>(i) * nt_ + pj] -= delta;
                    j = pj;
                }
                supply_[s] -= delta;
                demand_[found_sink] -= delta;
                pushed_total += delta;
            }
        }
        return pushed_total;
    }

    int ns_, nt_;
    std::vector<int64_t> cost_;
    std::vector<int64_t> flow_;
    std::vector<int64_t> supply_;
    std::vector<int64_t> demand_;
    std::vector<int64_t> potential_;
    std::vector<int64_t> dist_;
    std::vector<char> settled_;
    std::vector<std::vector<int>> adm_fwd_;       // per-source admissible sinks
    std::vector<std::vector<int>> flow_sources_;  // per-sink sources with flow > 0
};

void check_inputs(const GridMeasure& mu, const GridMeasure& nu, const GroundCost& cost) {
    if (mu.height != nu.height || mu.width != nu.width)
        throw input_error("exact_w2: measures must live on the same grid");
    if (cost.height != mu.height || cost.width != mu.width)
        throw input_error("exact_w2: ground cost does not match the measure grid");
    double sum_mu = 0.0, sum_nu = 0.0;
    for (double w : mu.weights) sum_mu += w;
    for (double w : nu.weights) sum_nu += w;
    if (std::abs(sum_mu - 1.0) > 1e-9 || std::abs(sum_nu - 1.0) > 1e-9)
        throw data_error("unbalanced input: measure mass deviates from 1 by more than 1e-9");
}

}  // namespace

W2Result exact_w2_with_plan(const GridMeasure& mu, const GridMeasure& nu, const GroundCost& cost) {
    check_inputs(mu, nu, cost);
    const ActiveSide src = quantize(mu.weights);
    const ActiveSide dst = quantize(nu.weights);

    TransportSolver solver(src, dst, cost);
    const int64_t total = solver.solve();

    W2Result result;
    result.plan.total_cost = static_cast<double>(total) / static_cast<double>(kMassScale);
    result.distance = std::sqrt(result.plan.total_cost);
    for (size_t i = 0; i < src.pixel.size(); ++i)
        for (size_t j = 0; j < dst.pixel.size(); ++j) {
            const int64_t f = solver.flow(static_cast<int>(i), static_cast<int>(j));
            if (f > 0)
                result.plan.entries.push_back(
                    {src.pixel[i], dst.pixel[j], static_cast<double>(f) / static_cast<double>(kMassScale)});
        }
    return result;
}

double exact_w2(const GridMeasure& mu, const GridMeasure& nu, const GroundCost& cost) {
    check_inputs(mu, nu, cost);
    const ActiveSide src = quantize(mu.weights);
    const ActiveSide dst = quantize(nu.weights);
    TransportSolver solver(src, dst, cost);
    return std::sqrt(static_cast<double>(solver.solve()) / static_cast<double>(kMassScale));
}

namespace {

double exhaustive_assignment(const std::vector<int>& src, const std::vector<int>& dst,
                             const GroundCost& cost) {
    const size_t n = src.size();
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::max();
    do {
        double total = 0.0;
        for (size_t i = 0; i < n; ++i) total += cost.at(src[i], dst[perm[i]]);
        best = std::min(best, total);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

// Jonker-Volgenant style shortest augmenting path assignment, O(n^3).
double hungarian_assignment(const std::vector<int>& src, const std::vector<int>& dst,
                            const GroundCost& cost) {
    const int n = static_cast<int>(src.size());
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, false);
        do {
            used[j0] = true;
            const int i0 = p[j0];
            int j1 = 0;
            double delta = inf;
            for (int j = 1; j <= n; ++j)
                if (!used[j]) {
                    const double cur = cost.at(src[i0 - 1], dst[j - 1]) - u[i0] - v[j];
                    if (cur < minv[j]) {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if (minv[j] < delta) {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    double total = 0.0;
    for (int j = 1; j <= n; ++j)
        if (p[j]) total += cost.at(src[p[j] - 1], dst[j - 1]);
    return total;
}

}  // namespace

double assignment_oracle(const std::vector<int>& src, const std::vector<int>& dst,
                         const GroundCost& cost) {
    if (src.size() != dst.size())
        throw input_error("assignment_oracle: supports must have equal size");
    if (src.empty())
        throw input_error("assignment_oracle: empty support");
    if (src.size() > 200)
        throw input_error("assignment_oracle: support too large (max 200 points)");
    const int n_grid = cost.size();
    for (int p : src)
        if (p < 0 || p >= n_grid) throw input_error("assignment_oracle: source pixel out of range");
    for (int p : dst)
        if (p < 0 || p >= n_grid) throw input_error("assignment_oracle: target pixel out of range");

    const double total = src.size() <= 10 ? exhaustive_assignment(src, dst, cost)
                                          : hungarian_assignment(src, dst, cost);
    return std::sqrt(total / static_cast<double>(src.size()));
}

GridMeasure uniform_support(const std::vector<int>& pixels, int height, int width) {
    if (pixels.empty())
        throw input_error("uniform_support: empty pixel list");
    GridMeasure m;
    m.height = height;
    m.width = width;
    m.weights.assign(static_cast<size_t>(height) * width, 0.0);
    const double w = 1.0 / static_cast<double>(pixels.size());
    for (int p : pixels) {
        if (p < 0 || p >= m.size()) throw input_error("uniform_support: pixel out of range");
        if (m.weights[static_cast<size_t>(p)] != 0.0)
            throw input_error("uniform_support: duplicate pixel");
        m.weights[static_cast<size_t>(p)] = w;
    }
    return m;
}

}  // namespace kenn
