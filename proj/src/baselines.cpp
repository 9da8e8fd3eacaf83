#include "cir/baselines.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "cir/rng.hpp"

namespace cir {

Tensor erm_loss(CirModel& model, const Batch& batch, Mode mode) {
  Tensor f_v = encode_video(model, batch.video, mode);
  return nd::cross_entropy(classify(model, f_v), batch.labels);
}

MixedBatch mixup_batch(const Batch& batch, int num_classes, double alpha,
                       std::uint64_t seed,
                       std::optional<double> forced_lambda) {
  if (!(alpha > 0.0)) throw ValueError("mixup: alpha must be positive");
  const auto b = static_cast<std::size_t>(batch.size());
  if (b < 2) throw DegenerateError("mixup: batch size >= 2 required");
  Rng rng(derive_seed(seed, "mixup"));
  std::vector<int> partner(b);
  std::iota(partner.begin(), partner.end(), 0);
  rng.shuffle(partner);

  MixedBatch out;
  nd::Mat mixed(batch.video.rows(), batch.video.cols());
  out.soft_targets = nd::Mat::Zero(batch.video.rows(), num_classes);
  for (std::size_t i = 0; i < b; ++i) {
    double lam = forced_lambda ? *forced_lambda : rng.beta(alpha, alpha);
    const auto j = static_cast<std::size_t>(partner[i]);
    mixed.row(static_cast<nd::Index>(i)) =
        lam * batch.video.value().row(static_cast<nd::Index>(i)) +
        (1.0 - lam) * batch.video.value().row(static_cast<nd::Index>(j));
    out.soft_targets(static_cast<nd::Index>(i), batch.labels[i]) += lam;
    out.soft_targets(static_cast<nd::Index>(i), batch.labels[j]) += 1.0 - lam;
  }
  out.video = Tensor::from_matrix(std::move(mixed));
  return out;
}

namespace {

// Domain id -> row indices, keeping only groups with >= 2 samples.
std::vector<std::vector<int>> eligible_groups(const std::vector<int>& domains,
                                              nd::Index batch) {
  if (static_cast<nd::Index>(domains.size()) != batch)
    throw ShapeError("domain loss: " + std::to_string(domains.size()) +
                     " domain labels for batch of " + std::to_string(batch));
  std::map<int, std::vector<int>> by_domain;
  for (std::size_t i = 0; i < domains.size(); ++i)
    by_domain[domains[i]].push_back(static_cast<int>(i));
  std::vector<std::vector<int>> groups;
  for (auto& [_, ids] : by_domain)
    if (ids.size() >= 2) groups.push_back(std::move(ids));
  return groups;
}

Tensor covariance(const Tensor& rows, const Tensor& mean) {
  Tensor centered = nd::add_bias(rows, nd::scale(mean, -1.0));
  double n = static_cast<double>(rows.rows());
  return nd::scale(nd::matmul(nd::transpose(centered), centered),
                   1.0 / (n - 1.0));
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  if (n == 0) return 0.0;
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Squared MMD as the all-pairs kernel-mean estimator (V-statistic):
// mean(Kaa) + mean(Kbb) - 2 mean(Kab). Exactly zero on identical sample
// sets, invariant to sample order within a group, and never below zero
// beyond rounding.
Tensor gaussian_mmd_sq(const Tensor& xa, const Tensor& xb,
                       const std::vector<double>& gammas) {
  Tensor d_aa = nd::pairwise_sqdist(xa, xa);
  Tensor d_bb = nd::pairwise_sqdist(xb, xb);
  Tensor d_ab = nd::pairwise_sqdist(xa, xb);

  const double na = static_cast<double>(xa.rows());
  const double nb = static_cast<double>(xb.rows());
  Tensor total = Tensor::scalar(0.0);
  for (double gamma : gammas) {
    double inv = -1.0 / gamma;
    Tensor k_aa = nd::exp_elem(nd::scale(d_aa, inv));
    Tensor k_bb = nd::exp_elem(nd::scale(d_bb, inv));
    Tensor k_ab = nd::exp_elem(nd::scale(d_ab, inv));
    Tensor term = nd::add(nd::scale(nd::sum(k_aa), 1.0 / (na * na)),
                          nd::scale(nd::sum(k_bb), 1.0 / (nb * nb)));
    total = nd::add(total,
                    nd::sub(term, nd::scale(nd::sum(k_ab), 2.0 / (na * nb))));
  }
  return total;
}

// Median pairwise squared distance across both groups, self-pairs
// excluded; constant with respect to the inputs in backward.
std::vector<double> median_bandwidths(const Tensor& xa, const Tensor& xb) {
  std::vector<double> dists;
  auto within = [&dists](const Tensor& m) {
    for (nd::Index i = 0; i < m.rows(); ++i)
      for (nd::Index j = 0; j < m.rows(); ++j)
        if (i != j)
          dists.push_back(
              (m.value().row(i) - m.value().row(j)).squaredNorm());
  };
  within(xa);
  within(xb);
  for (nd::Index i = 0; i < xa.rows(); ++i)
    for (nd::Index j = 0; j < xb.rows(); ++j)
      dists.push_back((xa.value().row(i) - xb.value().row(j)).squaredNorm());
  double med = std::max(median_of(std::move(dists)), 1e-12);
  return {0.5 * med, 1.0 * med, 2.0 * med};
}

}  // namespace

DomainPairLoss coral_loss(const Tensor& f_v, const std::vector<int>& domains) {
  auto groups = eligible_groups(domains, f_v.rows());
  DomainPairLoss out;
  out.value = Tensor::scalar(0.0);
  if (groups.size() < 2) return out;

  std::vector<Tensor> means, covs;
  for (const auto& ids : groups) {
    Tensor rows = nd::gather_rows(f_v, ids);
    Tensor mean = nd::mean_rows(rows);
    means.push_back(mean);
    covs.push_back(covariance(rows, mean));
  }
  const double e = static_cast<double>(f_v.cols());
  Tensor total = Tensor::scalar(0.0);
  for (std::size_t a = 0; a < groups.size(); ++a) {
    for (std::size_t b = a + 1; b < groups.size(); ++b) {
      Tensor mean_term = nd::sum(nd::square(nd::sub(means[a], means[b])));
      Tensor cov_term = nd::scale(
          nd::sum(nd::square(nd::sub(covs[a], covs[b]))), 1.0 / (4.0 * e * e));
      total = nd::add(total, nd::add(mean_term, cov_term));
      ++out.pairs;
    }
  }
  out.value = nd::scale(total, 1.0 / static_cast<double>(out.pairs));
  return out;
}

DomainPairLoss mmd_loss(const Tensor& f_v, const std::vector<int>& domains) {
  return mmd_loss(f_v, domains, {});
}

DomainPairLoss mmd_loss(const Tensor& f_v, const std::vector<int>& domains,
                        const std::vector<double>& gammas) {
  auto groups = eligible_groups(domains, f_v.rows());
  DomainPairLoss out;
  out.value = Tensor::scalar(0.0);
  if (groups.size() < 2) return out;

  std::vector<Tensor> rows;
  rows.reserve(groups.size());
  for (const auto& ids : groups) rows.push_back(nd::gather_rows(f_v, ids));
  Tensor total = Tensor::scalar(0.0);
  for (std::size_t a = 0; a < groups.size(); ++a) {
    for (std::size_t b = a + 1; b < groups.size(); ++b) {
      const std::vector<double>& g =
          gammas.empty() ? median_bandwidths(rows[a], rows[b]) : gammas;
      total = nd::add(total, gaussian_mmd_sq(rows[a], rows[b], g));
      ++out.pairs;
    }
  }
  out.value = nd::scale(total, 1.0 / static_cast<double>(out.pairs));
  return out;
}

}  // namespace cir
