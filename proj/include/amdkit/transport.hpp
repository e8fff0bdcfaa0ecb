#pragma once

// Discrete optimal transport between two finite distributions.
//
// transport_simplex() is the exact primal transportation simplex: least-cost
// initial basis completed to a spanning tree with zero cells, potentials
// u_i + v_j = c_ij on the basis, Bland's rule for both the entering cell
// (first negative reduced cost in row-major order) and the leaving cell
// (smallest row-major index among the tied minimum-ratio cells).
//
// sinkhorn_transport() is an entropically regularized log-domain fallback for
// supports too large for the exact solver.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "numeric.hpp"

namespace amdkit {

struct TransportCell {
    std::size_t row;
    std::size_t col;
    double mass;
};

/// Coupling between the supports of two distributions, stored sparsely.
struct TransportPlan {
    std::size_t n_rows = 0;
    std::size_t n_cols = 0;
    std::vector<TransportCell> cells;
    double cost = 0.0;
    std::size_t iterations = 0;

    std::vector<std::vector<double>> dense() const {
        std::vector<std::vector<double>> m(n_rows, std::vector<double>(n_cols, 0.0));
        for (const auto& c : cells) m[c.row][c.col] += c.mass;
        return m;
    }
    std::vector<double> row_sums() const {
        std::vector<double> s(n_rows, 0.0);
        for (const auto& c : cells) s[c.row] += c.mass;
        return s;
    }
    std::vector<double> col_sums() const {
        std::vector<double> s(n_cols, 0.0);
        for (const auto& c : cells) s[c.col] += c.mass;
        return s;
    }
};

namespace detail {

class TransportTree {
public:
    TransportTree(std::size_t n, std::size_t m) : n_(n), m_(m), adj_(n + m) {}

    std::size_t add(std::size_t i, std::size_t j, double x) {
        cells_.push_back({i, j, x});
        const std::size_t id = cells_.size() - 1;
        adj_[i].push_back(id);
        adj_[n_ + j].push_back(id);
        return id;
    }

    void replace(std::size_t id, std::size_t i, std::size_t j, double x) {
        auto drop = [&](std::size_t node) {
            auto& a = adj_[node];
            a.erase(std::find(a.begin(), a.end(), id));
        };
        drop(cells_[id].row);
        drop(n_ + cells_[id].col);
        cells_[id] = {i, j, x};
        adj_[i].push_back(id);
        adj_[n_ + j].push_back(id);
    }

    template <typename Cost>
    void compute_potentials(const Cost& cost, std::vector<double>& u, std::vector<double>& v) {
        const std::size_t nodes = n_ + m_;
        parent_cell_.assign(nodes, npos);
        depth_.assign(nodes, npos);
        std::vector<std::size_t> queue{0};
        depth_[0] = 0;
        u[0] = 0.0;
        for (std::size_t q = 0; q < queue.size(); ++q) {
            const std::size_t node = queue[q];
            for (std::size_t id : adj_[node]) {
                const auto& c = cells_[id];
                const std::size_t other = node < n_ ? n_ + c.col : c.row;
                if (depth_[other] != npos) continue;
                depth_[other] = depth_[node] + 1;
                parent_cell_[other] = id;
                if (other >= n_)
                    v[c.col] = cost(c.row, c.col) - u[c.row];
                else
                    u[c.row] = cost(c.row, c.col) - v[c.col];
                queue.push_back(other);
            }
        }
        if (queue.size() != nodes) throw RuntimeError("transport basis is not a spanning tree");
    }

    /// Tree path (cell ids) from node a to node b.
    std::vector<std::size_t> path(std::size_t a, std::size_t b) const {
        std::vector<std::size_t> from_a, from_b;
        while (depth_[a] > depth_[b]) a = step(a, from_a);
        while (depth_[b] > depth_[a]) b = step(b, from_b);
        while (a != b) {
            a = step(a, from_a);
            b = step(b, from_b);
        }
        from_a.insert(from_a.end(), from_b.rbegin(), from_b.rend());
        return from_a;
    }

    std::vector<TransportCell>& cells() { return cells_; }
    std::size_t rows() const { return n_; }

private:
    static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

    std::size_t step(std::size_t node, std::vector<std::size_t>& out) const {
        const std::size_t id = parent_cell_[node];
        out.push_back(id);
        const auto& c = cells_[id];
        return node < n_ ? n_ + c.col : c.row;
    }

    std::size_t n_, m_;
    std::vector<TransportCell> cells_;
    std::vector<std::vector<std::size_t>> adj_;
    std::vector<std::size_t> parent_cell_, depth_;
};

inline void check_marginals(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw ValidationError("transport: empty marginal");
    for (double v : a)
        if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("transport: invalid source mass");
    for (double v : b)
        if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("transport: invalid target mass");
    const double sa = std::accumulate(a.begin(), a.end(), 0.0);
    const double sb = std::accumulate(b.begin(), b.end(), 0.0);
    if (std::abs(sa - sb) > 1e-9 * std::max(1.0, sa)) throw ValidationError("transport: marginals have different mass");
}

}  // namespace detail

/// Exact optimal transport. `cost(i, j)` must be finite; masses must sum to the
/// same total.
template <typename Cost>
TransportPlan transport_simplex(std::span<const double> a, std::span<const double> b, const Cost& cost) {
    detail::check_marginals(a, b);
    const std::size_t n = a.size(), m = b.size();
    const double scale = std::max(1.0, std::accumulate(a.begin(), a.end(), 0.0));
    const double mass_tol = 1e-15 * scale;

    // Least-cost initial allocation. Every allocation exhausts a row or a
    // column, so the allocated cells form a forest.
    detail::TransportTree tree(n, m);
    std::vector<std::size_t> parent(n + m);
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    auto find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    {
        std::vector<double> ra(a.begin(), a.end()), rb(b.begin(), b.end());
        std::vector<std::pair<double, std::size_t>> order;
        order.reserve(n * m);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) order.emplace_back(cost(i, j), i * m + j);
        std::sort(order.begin(), order.end());
        for (const auto& [c, idx] : order) {
            const std::size_t i = idx / m, j = idx % m;
            if (ra[i] <= mass_tol || rb[j] <= mass_tol) continue;
            const double x = std::min(ra[i], rb[j]);
            ra[i] -= x;
            rb[j] -= x;
            if (ra[i] <= mass_tol) ra[i] = 0.0;
            if (rb[j] <= mass_tol) rb[j] = 0.0;
            tree.add(i, j, x);
            parent[find(i)] = find(n + j);
        }
    }
    // Complete the forest to a spanning tree with degenerate zero cells.
    for (std::size_t j = 0; j < m; ++j)
        if (find(0) != find(n + j)) {
            tree.add(0, j, 0.0);
            parent[find(0)] = find(n + j);
        }
    for (std::size_t i = 1; i < n; ++i)
        if (find(i) != find(n)) {
            tree.add(i, 0, 0.0);
            parent[find(i)] = find(n);
        }

    std::vector<double> u(n), v(m);
    const double rc_tol = 1e-9;
    const std::size_t max_iter = 1000 * (n + m) + 100000;
    std::size_t iter = 0;
    for (;; ++iter) {
        if (iter > max_iter) throw RuntimeError("transport simplex exceeded its iteration bound");
        tree.compute_potentials(cost, u, v);
        std::size_t ei = n, ej = m;
        for (std::size_t i = 0; i < n && ei == n; ++i)
            for (std::size_t j = 0; j < m; ++j)
                if (cost(i, j) - u[i] - v[j] < -rc_tol) {
                    ei = i;
                    ej = j;
                    break;
                }
        if (ei == n) break;

        // Cycle: entering cell (+), then the tree path col ej -> row ei with
        // alternating signs starting at (-).
        const auto cyc = tree.path(n + ej, ei);
        auto& cells = tree.cells();
        double theta = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < cyc.size(); k += 2) theta = std::min(theta, cells[cyc[k]].mass);
        std::size_t leaving = cyc[0];
        std::size_t leaving_key = std::numeric_limits<std::size_t>::max();
        for (std::size_t k = 0; k < cyc.size(); k += 2) {
            const auto& c = cells[cyc[k]];
            const std::size_t key = c.row * m + c.col;
            if (c.mass <= theta + mass_tol && key < leaving_key) {
                leaving = cyc[k];
                leaving_key = key;
            }
        }
        for (std::size_t k = 0; k < cyc.size(); ++k) {
            auto& x = cells[cyc[k]].mass;
            x = (k % 2 == 0) ? std::max(0.0, x - theta) : x + theta;
        }
        tree.replace(leaving, ei, ej, theta);
    }

    TransportPlan plan;
    plan.n_rows = n;
    plan.n_cols = m;
    plan.iterations = iter;
    for (const auto& c : tree.cells()) {
        if (c.mass <= 0.0) continue;
        plan.cells.push_back(c);
        plan.cost += c.mass * cost(c.row, c.col);
    }
    return plan;
}

struct SinkhornSettings {
    double epsilon = 1e-3;
    std::size_t max_iterations = 1000;
    double tolerance = 1e-9;
};

/// Log-domain Sinkhorn. The returned plan is dense (every cell with positive
/// mass) and its cost is the transport cost of the regularized coupling.
template <typename Cost>
TransportPlan sinkhorn_transport(std::span<const double> a, std::span<const double> b, const Cost& cost,
                                 const SinkhornSettings& s = {}) {
    detail::check_marginals(a, b);
    const std::size_t n = a.size(), m = b.size();
    const double eps = s.epsilon;
    std::vector<double> f(n, 0.0), g(m, 0.0), log_a(n), log_b(m), tmp(std::max(n, m));
    for (std::size_t i = 0; i < n; ++i) log_a[i] = a[i] > 0 ? std::log(a[i]) : -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j) log_b[j] = b[j] > 0 ? std::log(b[j]) : -std::numeric_limits<double>::infinity();

    std::size_t iter = 0;
    for (; iter < s.max_iterations; ++iter) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < m; ++j) tmp[j] = (g[j] - cost(i, j)) / eps;
            f[i] = eps * (log_a[i] - log_sum_exp(std::span<const double>(tmp.data(), m)));
        }
        double err = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            for (std::size_t i = 0; i < n; ++i) tmp[i] = (f[i] - cost(i, j)) / eps;
            const double lse = log_sum_exp(std::span<const double>(tmp.data(), n));
            err += std::abs(std::exp(g[j] / eps + lse) - b[j]);
            g[j] = eps * (log_b[j] - lse);
        }
        if (err < s.tolerance) break;
    }
    TransportPlan plan;
    plan.n_rows = n;
    plan.n_cols = m;
    plan.iterations = iter;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            const double x = std::exp((f[i] + g[j] - cost(i, j)) / eps);
            if (x > 0.0) {
                plan.cells.push_back({i, j, x});
                plan.cost += x * cost(i, j);
            }
        }
    return plan;
}

}  // namespace amdkit
