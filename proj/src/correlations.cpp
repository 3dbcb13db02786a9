#include "fedrel/correlations.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <vector>

namespace fedrel {

namespace {

void require_rank2(const Tensor& t, const char* what) {
  if (t.rank() != 2) throw ShapeError(std::string(what) + ": expected rank-2 input");
}

}  // namespace

Adjacency knn_adjacency(const Tensor& features, int k) {
  require_rank2(features, "knn_adjacency");
  const Index n = features.rows();
  if (k < 1 || k >= n) {
    throw ShapeError("knn_adjacency: need 1 <= k < N, got k=" +
                     std::to_string(k) + ", N=" + std::to_string(n));
  }
  const Matrix& x = features.mat();
  Matrix adj = Matrix::Zero(n, n);
  std::vector<std::pair<double, Index>> order;
  for (Index i = 0; i < n; ++i) {
    order.clear();
    for (Index j = 0; j < n; ++j) {
      if (j == i) continue;
      order.emplace_back((x.row(i) - x.row(j)).norm(), j);
    }
    // Stable over (distance, index): equal distances resolve to lower index.
    std::sort(order.begin(), order.end());
    for (int m = 0; m < k; ++m) adj(i, order[static_cast<std::size_t>(m)].second) = 1.0;
  }
  return {Tensor(std::move(adj)), AdjacencyKind::kKnn};
}

Adjacency pcc_adjacency(const Tensor& features) {
  require_rank2(features, "pcc_adjacency");
  const Index n = features.rows();
  const Matrix& x = features.mat();
  Vector mean(n), sd(n);
  for (Index i = 0; i < n; ++i) {
    mean(i) = x.row(i).mean();
    const double var = (x.row(i).array() - mean(i)).square().mean();
    if (var <= 0.0) {
      throw NumericError("pcc_adjacency: zero-variance row " + std::to_string(i));
    }
    sd(i) = std::sqrt(var);
  }
  Matrix adj = Matrix::Identity(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const double cov = ((x.row(i).array() - mean(i)) *
                          (x.row(j).array() - mean(j)))
                             .mean();
      const double r = std::abs(cov / (sd(i) * sd(j)));
      adj(i, j) = r;
      adj(j, i) = r;
    }
  }
  return {Tensor(std::move(adj)), AdjacencyKind::kPcc};
}

namespace {

/// Instantaneous phases of one real signal via the analytic signal: direct
/// DFT, negative-frequency bins zeroed (positive doubled), inverse DFT.
std::vector<double> instantaneous_phase(const Eigen::RowVectorXd& s) {
  const Index n = s.size();
  const double var = (s.array() - s.mean()).square().mean();
  if (var <= 1e-24) {
    throw NumericError("plv_adjacency: constant signal, phase undefined");
  }
  using cd = std::complex<double>;
  const double two_pi = 6.283185307179586476925286766559;
  std::vector<cd> spectrum(static_cast<std::size_t>(n));
  for (Index k = 0; k < n; ++k) {
    cd acc(0.0, 0.0);
    for (Index t = 0; t < n; ++t) {
      const double ang = -two_pi * static_cast<double>(k * t) / static_cast<double>(n);
      acc += s(t) * cd(std::cos(ang), std::sin(ang));
    }
    spectrum[static_cast<std::size_t>(k)] = acc;
  }
  // One-sided multiplier: keep DC (and Nyquist for even n), double positives.
  for (Index k = 0; k < n; ++k) {
    auto& v = spectrum[static_cast<std::size_t>(k)];
    if (k == 0 || (n % 2 == 0 && k == n / 2)) {
      continue;
    } else if (k < (n + 1) / 2) {
      v *= 2.0;
    } else {
      v = cd(0.0, 0.0);
    }
  }
  std::vector<double> phase(static_cast<std::size_t>(n));
  for (Index t = 0; t < n; ++t) {
    cd acc(0.0, 0.0);
    for (Index k = 0; k < n; ++k) {
      const double ang = two_pi * static_cast<double>(k * t) / static_cast<double>(n);
      acc += spectrum[static_cast<std::size_t>(k)] * cd(std::cos(ang), std::sin(ang));
    }
    acc /= static_cast<double>(n);
    phase[static_cast<std::size_t>(t)] = std::arg(acc);
  }
  return phase;
}

}  // namespace

Adjacency plv_adjacency(const Tensor& signals) {
  require_rank2(signals, "plv_adjacency");
  const Index n = signals.rows();
  const Index d = signals.cols();
  if (d < 4) throw ShapeError("plv_adjacency: need at least 4 samples per row");

  std::vector<std::vector<double>> phases;
  phases.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    phases.push_back(instantaneous_phase(signals.mat().row(i)));
  }

  Matrix adj = Matrix::Identity(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      std::complex<double> acc(0.0, 0.0);
      for (Index t = 0; t < d; ++t) {
        const double dphi = phases[static_cast<std::size_t>(i)][static_cast<std::size_t>(t)] -
                            phases[static_cast<std::size_t>(j)][static_cast<std::size_t>(t)];
        acc += std::complex<double>(std::cos(dphi), std::sin(dphi));
      }
      const double plv = std::min(1.0, std::abs(acc) / static_cast<double>(d));
      adj(i, j) = plv;
      adj(j, i) = plv;
    }
  }
  return {Tensor(std::move(adj)), AdjacencyKind::kPlv};
}

}  // namespace fedrel
