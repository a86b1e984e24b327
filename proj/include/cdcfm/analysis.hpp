// Copyright 2026 The cdcfm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cdcfm/coupling.hpp"
#include "cdcfm/error.hpp"
#include "cdcfm/pyramid.hpp"
#include "cdcfm/rng.hpp"
#include "cdcfm/sampler.hpp"
#include "cdcfm/schedule.hpp"
#include "cdcfm/train.hpp"

namespace cdcfm {

/// Running mean and standard error of the mean.
class MeanAccumulator {
 public:
  void add(double v) {
    ++n_;
    const double delta = v - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_ += delta * (v - mean_);
  }
  long count() const noexcept { return n_; }
  double mean() const noexcept { return mean_; }
  double variance() const noexcept { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
  double standard_error() const noexcept {
    return n_ > 1 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0;
  }

 private:
  long n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

// ---------------------------------------------------------------------------
// Closed forms. d_k = beta^(k-1) d_1 and sigma_k = gamma^-(k-1) sigma (k >= 2).

/// Noise part of Load_A = d_K^2 sigma^2 = beta^(2(K-1)) d_1^2 sigma^2.
inline double noise_load_closed_direct(int K, double d1, double sigma, double beta) {
  return std::pow(beta, 2.0 * (K - 1)) * d1 * d1 * sigma * sigma;
}

/// Noise part of Load_B = sum_k d_k^2 sigma_k^2; equals K d_1^2 sigma^2 when beta = gamma = 2.
inline double noise_load_closed_cascade(int K, double d1, double sigma, double gamma, double beta) {
  double sum = 0.0;
  for (int k = 1; k <= K; ++k) sum += std::pow(beta * beta / (gamma * gamma), k - 1);
  return d1 * d1 * sigma * sigma * sum;
}

/// L_A - L_B once the shared signal energy cancels:
/// sigma^2 d_1 (beta^(K-1) - 1 - sum_{k=2}^K beta^(k-1) gamma^(-2(k-1))).
inline double closed_form_cost_gap(int K, double d1, double sigma, double gamma, double beta) {
  double tail = 0.0;
  for (int k = 2; k <= K; ++k) tail += std::pow(beta, k - 1) * std::pow(gamma, -2.0 * (k - 1));
  return sigma * sigma * d1 * (std::pow(beta, K - 1) - 1.0 - tail);
}

struct NoiseLoadEstimate {
  double direct = 0.0;   // Monte-Carlo d_K E|sigma zeta|^2
  double cascade = 0.0;  // Monte-Carlo sum_k d_k E|sigma_k zeta_k|^2
  double direct_se = 0.0;
  double cascade_se = 0.0;
};

/// Monte-Carlo noise loads under beta-accounting dimensions d_k = beta^(k-1) d_1.
inline NoiseLoadEstimate estimate_noise_loads(int K, int d1, double sigma, double gamma, int beta, int n, Rng& rng) {
  if (K < 1 || d1 < 1 || beta < 1 || n < 2) throw ArgumentError("estimate_noise_loads: invalid arguments");
  std::vector<long> dims(K);
  dims[0] = d1;
  for (int k = 1; k < K; ++k) dims[k] = dims[k - 1] * beta;
  MeanAccumulator direct;
  MeanAccumulator cascade;
  for (int i = 0; i < n; ++i) {
    double e = 0.0;
    for (long j = 0; j < dims[K - 1]; ++j) {
      const double z = sigma * rng.normal();
      e += z * z;
    }
    direct.add(static_cast<double>(dims[K - 1]) * e);
    double load = 0.0;
    for (int k = 1; k <= K; ++k) {
      const double s = k == 1 ? sigma : sigma * std::pow(gamma, -(k - 1));
      double ek = 0.0;
      for (long j = 0; j < dims[k - 1]; ++j) {
        const double z = s * rng.normal();
        ek += z * z;
      }
      load += static_cast<double>(dims[k - 1]) * ek;
    }
    cascade.add(load);
  }
  return {direct.mean(), cascade.mean(), direct.standard_error(), cascade.standard_error()};
}

// ---------------------------------------------------------------------------
// Transport costs.

struct CostReport {
  int stages = 1;
  int n_samples = 0;
  int branching_beta = 2;  // dimension convention of the closed-form columns

  // Direct single-stage transport N(0, sigma^2 I_{d_K}) -> data.
  double L_A_hat = 0.0;
  double L_A_se = 0.0;
  double data_energy = 0.0;  // E|x1|^2
  double prior_energy = 0.0;  // E|x0|^2

  // Cascade with conditional dependent coupling, per stage (index k - 1).
  std::vector<double> L_k_hat;
  std::vector<double> L_k_se;
  double L_B_hat = 0.0;  // sum of L_k_hat
  double L_B_se = 0.0;
  // Residual energy E|x1^(k) - P x1^(k)|^2 at the stage's own resolution
  // (E|x1^(1)|^2 for k = 1) and the decomposed estimate residual + d_k sigma_k^2.
  std::vector<double> residual_energy;
  std::vector<double> decomposed_L_k;
  // E|eps~(k)|^2 with the detail embedded at full resolution.
  std::vector<double> signal_energy;
  std::vector<double> signal_energy_se;

  std::vector<long> dims;        // true tensor sizes d_k
  std::vector<long> dims_beta;   // d_1 * beta^(k-1)
  std::vector<double> sigmas;    // sigma_k

  // Loads, Load = L x d, with the true dimensions.
  double load_A_hat = 0.0;
  double load_B_hat = 0.0;

  // Noise loads: closed form under beta accounting and Monte-Carlo counterparts.
  double noise_load_closed_A = 0.0;
  double noise_load_closed_B = 0.0;
  double noise_load_mc_A = 0.0;
  double noise_load_mc_B = 0.0;
  double noise_load_mc_A_se = 0.0;
  double noise_load_mc_B_se = 0.0;
  // Noise loads with true dimensions, closed form.
  double noise_load_true_A = 0.0;
  double noise_load_true_B = 0.0;
};

/// Monte-Carlo transport costs of the direct model (L_A) and of each cascade
/// stage (L_k), plus the detail-energy decomposition and load accounting.
inline CostReport estimate_costs(std::span<const Image> dataset, const StageSchedule& schedule, int n, Rng& rng,
                                 int beta = 2, int noise_draws = 100000) {
  if (dataset.empty()) throw ArgumentError("estimate_costs: empty dataset");
  if (n < 100) throw ArgumentError("estimate_costs: need n >= 100");
  const int K = schedule.stages();
  for (const Image& x : dataset) {
    if (!schedule.matches(x, K)) throw ShapeError("estimate_costs: image " + x.shape_string() + " off schedule");
  }

  CostReport r;
  r.stages = K;
  r.n_samples = n;
  r.branching_beta = beta;
  r.L_k_hat.assign(K, 0.0);
  r.L_k_se.assign(K, 0.0);
  r.residual_energy.assign(K, 0.0);
  r.decomposed_L_k.assign(K, 0.0);
  r.signal_energy.assign(K, 0.0);
  r.signal_energy_se.assign(K, 0.0);
  for (int k = 1; k <= K; ++k) {
    r.dims.push_back(static_cast<long>(schedule.dim_at(k)));
    r.dims_beta.push_back(static_cast<long>(schedule.dim_at(1)) * static_cast<long>(std::pow(beta, k - 1)));
    r.sigmas.push_back(schedule.sigma_at(k));
  }

  MeanAccumulator la, lb, data_e, prior_e;
  std::vector<MeanAccumulator> lk(K), resid(K), signal(K);
  for (int i = 0; i < n; ++i) {
    const Image& x = dataset[rng.index(dataset.size())];

    const Image x0 = static_cast<float>(schedule.sigma()) * rng.normal_like(x);
    la.add(squared_norm(x - x0));
    data_e.add(squared_norm(x));
    prior_e.add(squared_norm(x0));

    double total = 0.0;
    for (int k = 1; k <= K; ++k) {
      const Image x1k = make_stage_target(x, k, schedule);
      const Image noise = rng.normal_like(x1k);
      const Image x0k = make_source(x1k, k, noise, schedule);
      const double cost = squared_norm(x1k - x0k);
      lk[k - 1].add(cost);
      total += cost;
      resid[k - 1].add(k == 1 ? squared_norm(x1k) : squared_norm(x1k - project(x1k)));
    }
    lb.add(total);

    const DetailDecomposition dec = detail_decompose(x, K);
    for (int k = 1; k <= K; ++k) signal[k - 1].add(squared_norm(dec.details[k - 1]));
  }

  r.L_A_hat = la.mean();
  r.L_A_se = la.standard_error();
  r.data_energy = data_e.mean();
  r.prior_energy = prior_e.mean();
  r.L_B_hat = 0.0;
  for (int k = 0; k < K; ++k) {
    r.L_k_hat[k] = lk[k].mean();
    r.L_k_se[k] = lk[k].standard_error();
    r.L_B_hat += r.L_k_hat[k];
    r.residual_energy[k] = resid[k].mean();
    r.decomposed_L_k[k] = r.residual_energy[k] + static_cast<double>(r.dims[k]) * r.sigmas[k] * r.sigmas[k];
    r.signal_energy[k] = signal[k].mean();
    r.signal_energy_se[k] = signal[k].standard_error();
  }
  r.L_B_se = lb.standard_error();

  r.load_A_hat = r.L_A_hat * static_cast<double>(r.dims[K - 1]);
  for (int k = 0; k < K; ++k) r.load_B_hat += r.L_k_hat[k] * static_cast<double>(r.dims[k]);

  const double d1 = static_cast<double>(r.dims[0]);
  const double sigma = schedule.sigma();
  r.noise_load_closed_A = noise_load_closed_direct(K, d1, sigma, beta);
  r.noise_load_closed_B = noise_load_closed_cascade(K, d1, sigma, schedule.gamma(), beta);
  if (noise_draws > 1) {
    const NoiseLoadEstimate mc =
        estimate_noise_loads(K, static_cast<int>(r.dims[0]), sigma, schedule.gamma(), beta, noise_draws, rng);
    r.noise_load_mc_A = mc.direct;
    r.noise_load_mc_B = mc.cascade;
    r.noise_load_mc_A_se = mc.direct_se;
    r.noise_load_mc_B_se = mc.cascade_se;
  }
  r.noise_load_true_A = static_cast<double>(r.dims[K - 1]) * r.dims[K - 1] * sigma * sigma;
  for (int k = 0; k < K; ++k) {
    r.noise_load_true_B += static_cast<double>(r.dims[k]) * r.dims[k] * r.sigmas[k] * r.sigmas[k];
  }
  return r;
}

struct CostComparison {
  double margin = 0.0;        // L_A_hat - L_B_hat
  double combined_se = 0.0;   // sqrt(se_A^2 + se_B^2)
  bool strictly_greater = false;  // margin > 3 combined_se
  bool degenerate = false;        // K = 1
  double closed_form_gap = 0.0;   // noise-term difference under beta accounting
  std::string verdict;
};

inline CostComparison compare_costs(const CostReport& report, double gamma, double sigma) {
  CostComparison c;
  c.margin = report.L_A_hat - report.L_B_hat;
  c.combined_se = std::sqrt(report.L_A_se * report.L_A_se + report.L_B_se * report.L_B_se);
  c.degenerate = report.stages == 1;
  c.strictly_greater = !c.degenerate && c.margin > 3.0 * c.combined_se;
  c.closed_form_gap = closed_form_cost_gap(report.stages, static_cast<double>(report.dims.front()), sigma, gamma,
                                           report.branching_beta);
  if (c.degenerate) {
    c.verdict = "degenerate, not strictly greater";
  } else if (c.strictly_greater) {
    c.verdict = "L_A > L_B beyond 3 standard errors";
  } else {
    c.verdict = "difference within 3 standard errors";
  }
  return c;
}

inline CostComparison compare_costs(const CostReport& report, const StageSchedule& schedule) {
  return compare_costs(report, schedule.gamma(), schedule.sigma());
}

// ---------------------------------------------------------------------------
// Timing.

struct TimingReport {
  std::vector<double> per_stage_seconds;  // median per stage
  double total_seconds = 0.0;             // sum of per-stage medians
  double single_stage_seconds = 0.0;      // median, full resolution, same total NFE
  std::vector<int> resolutions;           // stage heights
  std::vector<int> nfe;                   // per-stage function evaluations
  int single_stage_nfe = 0;
};

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

/// Wall-clock medians of the cascade (per stage) and of a single-stage run
/// at full resolution with the same total step count. One warm-up run of each
/// is discarded.
template <VelocityField Field>
TimingReport time_inference(const Field& field, const SampleConfig& cfg, int trials) {
  if (trials < 3) throw ArgumentError("time_inference: need at least 3 trials");
  using clock = std::chrono::steady_clock;
  const StageSchedule& s = cfg.schedule;
  const int K = s.stages();
  const int evals_per_step = cfg.condition ? 2 : 1;

  TimingReport report;
  int total_steps = 0;
  for (int k = 1; k <= K; ++k) {
    report.resolutions.push_back(s.height_at(k));
    report.nfe.push_back(s.steps_at(k) * evals_per_step);
    total_steps += s.steps_at(k);
  }
  report.single_stage_nfe = total_steps * evals_per_step;

  // Single stage: prior N(0, sigma^2 I_{d_K}) integrated with all the steps at level K.
  StageSchedule single = s.with_steps([&] {
    std::vector<int> st(K, 1);
    st[K - 1] = total_steps;
    return st;
  }());
  SampleConfig single_cfg = cfg;
  single_cfg.schedule = single;

  std::vector<std::vector<double>> stage_times(K);
  std::vector<double> single_times;
  for (int trial = 0; trial <= trials; ++trial) {
    Rng rng({cfg.seed, static_cast<std::uint64_t>(trial)});
    auto t0 = clock::now();
    Image x = sample_first_stage(field, cfg, rng);
    auto t1 = clock::now();
    if (trial > 0) stage_times[0].push_back(std::chrono::duration<double>(t1 - t0).count());
    for (int k = 2; k <= K; ++k) {
      t0 = clock::now();
      x = refine_stage(x, k, field, cfg, rng);
      t1 = clock::now();
      if (trial > 0) stage_times[k - 1].push_back(std::chrono::duration<double>(t1 - t0).count());
    }

    t0 = clock::now();
    Image y = static_cast<float>(s.sigma()) * rng.normal_image(s.channels(), s.height_at(K), s.width_at(K), K);
    y = euler_stage(y, K, field, single_cfg);
    t1 = clock::now();
    if (trial > 0) single_times.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  for (int k = 0; k < K; ++k) {
    report.per_stage_seconds.push_back(median(stage_times[k]));
    report.total_seconds += report.per_stage_seconds.back();
  }
  report.single_stage_seconds = median(single_times);
  return report;
}

// ---------------------------------------------------------------------------
// Sample quality.

/// Squared 2-Wasserstein distance between two sorted 1-D empirical laws
/// with uniform weights, by merging their quantile functions.
inline double w2_squared_sorted(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  double total = 0.0;
  std::size_t i = 0;
  std::size_t j = 0;
  double q = 0.0;
  while (i < n && j < m) {
    const double qa = static_cast<double>(i + 1) / n;
    const double qb = static_cast<double>(j + 1) / m;
    const double next = std::min(qa, qb);
    const double d = a[i] - b[j];
    total += (next - q) * d * d;
    q = next;
    if (qa <= next) ++i;
    if (qb <= next) ++j;
  }
  return total;
}

/// Mean over random unit directions u of W2(<a, u>, <b, u>).
inline double sliced_wasserstein(std::span<const Image> a, std::span<const Image> b, int n_projections, Rng& rng) {
  if (a.empty() || b.empty()) throw ArgumentError("sliced_wasserstein: empty set");
  if (n_projections < 1) throw ArgumentError("sliced_wasserstein: need at least one projection");
  const Image& ref = a.front();
  auto same = [&](const Image& x) {
    return x.channels() == ref.channels() && x.height() == ref.height() && x.width() == ref.width();
  };
  for (const Image& x : a) if (!same(x)) throw ShapeError("sliced_wasserstein: shape mismatch");
  for (const Image& x : b) if (!same(x)) throw ShapeError("sliced_wasserstein: shape mismatch");

  const std::size_t d = ref.size();
  std::vector<double> u(d);
  std::vector<double> pa(a.size());
  std::vector<double> pb(b.size());
  double sum = 0.0;
  for (int p = 0; p < n_projections; ++p) {
    double norm = 0.0;
    for (double& v : u) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : u) v /= norm;
    auto project_set = [&](std::span<const Image> set, std::vector<double>& out) {
      for (std::size_t s = 0; s < set.size(); ++s) {
        double acc = 0.0;
        const auto data = set[s].data();
        for (std::size_t i = 0; i < d; ++i) acc += u[i] * data[i];
        out[s] = acc;
      }
      std::sort(out.begin(), out.end());
    };
    project_set(a, pa);
    project_set(b, pb);
    sum += std::sqrt(w2_squared_sorted(pa, pb));
  }
  return sum / n_projections;
}

/// Per-stage distance between sampled stage outputs and the block-averaged
/// held-out data. Uses `cfg.seed` for the cascades and `rng` for projections.
template <VelocityField Field>
std::vector<double> per_stage_marginal_check(const Field& field, std::span<const Image> held_out,
                                             const SampleConfig& cfg, int n, Rng& rng, int n_projections = 128) {
  if (held_out.empty()) throw ArgumentError("per_stage_marginal_check: empty held-out set");
  if (n < 1) throw ArgumentError("per_stage_marginal_check: n must be positive");
  const int K = cfg.schedule.stages();
  SampleConfig record = cfg;
  record.record_intermediates = true;
  const std::vector<SampleResult> samples = sample_many(field, record, n);
  std::vector<double> out;
  for (int k = 1; k <= K; ++k) {
    std::vector<Image> generated;
    generated.reserve(samples.size());
    for (const SampleResult& s : samples) generated.push_back(s.intermediates[k - 1]);
    std::vector<Image> reference;
    reference.reserve(held_out.size());
    for (const Image& x : held_out) reference.push_back(make_stage_target(x, k, cfg.schedule));
    out.push_back(sliced_wasserstein(generated, reference, n_projections, rng));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Diminish-factor sweep.

struct SweepSettings {
  StageSchedule schedule;  // gamma is overridden per row
  ModelConfig model;
  TrainConfig train;
  int eval_samples = 128;
  int projections = 128;
  int timing_trials = 5;
  double guidance_scale = 3.0;
  Condition condition;
  std::uint64_t seed = 0;
};

struct SweepRow {
  double gamma = 1.0;
  double sliced_wasserstein = 0.0;  // final stage vs held-out data
  double inference_seconds = 0.0;   // median cascade time
};

/// Optional source of a pre-trained model for a given gamma (checkpoint reuse).
using SweepModelSource = std::function<std::optional<VelocityModel<float>>(double gamma)>;

inline std::vector<SweepRow> gamma_sweep(std::span<const LabeledImage> train_set, std::span<const Image> held_out,
                                         const SweepSettings& settings, std::span<const double> gammas,
                                         const SweepModelSource& reuse = {}) {
  for (double g : gammas) {
    if (!(g >= 1.0 && g <= 5.0)) throw ArgumentError("gamma_sweep: gamma " + std::to_string(g) + " outside [1, 5]");
  }
  if (settings.timing_trials < 3) throw ArgumentError("gamma_sweep: need at least 3 timing trials");
  std::vector<SweepRow> rows;
  std::vector<VelocityModel<float>> models;
  std::vector<SampleConfig> configs;
  for (double g : gammas) {
    const StageSchedule schedule = settings.schedule.with_gamma(g);
    std::optional<VelocityModel<float>> model;
    if (reuse) model = reuse(g);
    if (!model) model = train(train_set, schedule, settings.model, settings.train).ema;

    SampleConfig cfg;
    cfg.schedule = schedule;
    cfg.guidance_scale = settings.guidance_scale;
    cfg.condition = settings.condition;
    cfg.seed = settings.seed;

    const std::vector<SampleResult> samples = sample_many(ModelField(*model), cfg, settings.eval_samples);
    std::vector<Image> generated;
    for (const SampleResult& s : samples) generated.push_back(s.output);
    Rng proj({settings.seed, 0x5157});
    rows.push_back({g, sliced_wasserstein(generated, held_out, settings.projections, proj), 0.0});
    models.push_back(std::move(*model));
    configs.push_back(cfg);
  }

  // Timing rounds visit every gamma in turn so machine load drifts hit all
  // rows alike. Round 0 is a discarded warm-up.
  std::vector<std::vector<double>> times(rows.size());
  for (int trial = 0; trial <= settings.timing_trials; ++trial) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      Rng rng({settings.seed, static_cast<std::uint64_t>(trial)});
      const auto t0 = std::chrono::steady_clock::now();
      (void)sample(ModelField(models[i]), configs[i], rng);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (trial > 0) times[i].push_back(secs);
    }
  }
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i].inference_seconds = median(times[i]);
  return rows;
}

}  // namespace cdcfm
