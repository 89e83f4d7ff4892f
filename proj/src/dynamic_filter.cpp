#include "dynamic_filter.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

namespace fsp {

std::vector<double> LossFlowRecord::deltas() const {
  if (values.size() < 2) throw InputError("loss flow needs at least 2 values");
  std::vector<double> d(values.size() - 1);
  for (size_t k = 0; k + 1 < values.size(); ++k) d[k] = values[k + 1] - values[k];
  return d;
}

Vec2 extract_features(const LossFlowRecord& record) {
  const std::vector<double> d = record.deltas();
  double level = 0.0;
  for (double v : record.values) level += v;
  level /= static_cast<double>(record.values.size());
  double mean = 0.0;
  for (double v : d) mean += v;
  mean /= static_cast<double>(d.size());
  double var = 0.0;
  for (double v : d) var += (v - mean) * (v - mean);
  var /= static_cast<double>(d.size());
  const Vec2 f(level, std::sqrt(var));
  if (!f.allFinite()) throw NumericError("loss flow produced non-finite features");
  return f;
}

Vec2 GmmModel::standardize(const Vec2& raw) const {
  return (raw - feature_mean).cwiseQuotient(feature_scale);
}

namespace {

double log_gauss_diag(const Vec2& x, const GmmComponent& c) {
  double out = -std::log(2.0 * M_PI);
  for (int k = 0; k < 2; ++k) {
    const double d = x[k] - c.mean[k];
    out += -0.5 * std::log(c.variance[k]) - 0.5 * d * d / c.variance[k];
  }
  return out;
}

double log_sum_exp(double a, double b) {
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// Lloyd iterations after k-means++ seeding; empty clusters are reseeded to
// the point farthest from its assigned center.
std::vector<int> kmeans_two(const std::vector<Vec2>& pts, std::mt19937_64& rng,
                            int iterations) {
  const size_t n = pts.size();
  std::vector<Vec2> centers(2);
  std::uniform_int_distribution<size_t> first(0, n - 1);
  centers[0] = pts[first(rng)];
  std::vector<double> d2(n);
  double total = 0.0;
  for (size_t i = 0; i < n; ++i) {
    d2[i] = (pts[i] - centers[0]).squaredNorm();
    total += d2[i];
  }
  if (total <= 0.0) {
    centers[1] = centers[0];
  } else {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double target = unit(rng) * total;
    size_t pick = n - 1;
    for (size_t i = 0; i < n; ++i) {
      target -= d2[i];
      if (target <= 0.0) {
        pick = i;
        break;
      }
    }
    centers[1] = pts[pick];
  }

  std::vector<int> assign(n, 0);
  for (int it = 0; it < iterations; ++it) {
    for (size_t i = 0; i < n; ++i) {
      assign[i] =
          (pts[i] - centers[0]).squaredNorm() <= (pts[i] - centers[1]).squaredNorm() ? 0 : 1;
    }
    for (int c = 0; c < 2; ++c) {
      Vec2 sum = Vec2::Zero();
      size_t count = 0;
      for (size_t i = 0; i < n; ++i) {
        if (assign[i] != c) continue;
        sum += pts[i];
        ++count;
      }
      if (count == 0) {
        size_t far = 0;
        double best = -1.0;
        for (size_t i = 0; i < n; ++i) {
          const double d = (pts[i] - centers[assign[i]]).squaredNorm();
          if (d > best) {
            best = d;
            far = i;
          }
        }
        centers[c] = pts[far];
      } else {
        centers[c] = sum / static_cast<double>(count);
      }
    }
  }
  for (size_t i = 0; i < n; ++i) {
    assign[i] =
        (pts[i] - centers[0]).squaredNorm() <= (pts[i] - centers[1]).squaredNorm() ? 0 : 1;
  }
  return assign;
}

GmmComponent moment_fit(const std::vector<Vec2>& pts, const std::vector<char>& member,
                        double weight, double floor_value) {
  GmmComponent c;
  Vec2 sum = Vec2::Zero();
  size_t count = 0;
  for (size_t i = 0; i < pts.size(); ++i) {
    if (!member[i]) continue;
    sum += pts[i];
    ++count;
  }
  if (count == 0) {
    c.variance = Vec2::Constant(floor_value);
    c.weight = weight;
    return c;
  }
  c.mean = sum / static_cast<double>(count);
  Vec2 var = Vec2::Zero();
  for (size_t i = 0; i < pts.size(); ++i) {
    if (!member[i]) continue;
    var += (pts[i] - c.mean).cwiseAbs2();
  }
  var /= static_cast<double>(count);
  c.variance = var.cwiseMax(floor_value);
  c.weight = weight;
  return c;
}

double total_log_likelihood(const std::vector<Vec2>& pts,
                            const std::vector<GmmComponent>& comps) {
  double ll = 0.0;
  for (const Vec2& p : pts) {
    double acc = -std::numeric_limits<double>::infinity();
    for (const GmmComponent& c : comps)
      acc = log_sum_exp(acc, std::log(c.weight) + log_gauss_diag(p, c));
    ll += acc;
  }
  return ll;
}

GmmModel one_component_model(const std::vector<Vec2>& pts, const GmmOptions& opts,
                             GmmModel base) {
  std::vector<char> all(pts.size(), 1);
  base.component_count = 1;
  base.components = {moment_fit(pts, all, 1.0, opts.variance_floor)};
  base.static_component = 0;
  base.converged = true;
  base.log_likelihood = total_log_likelihood(pts, base.components);
  return base;
}

}  // namespace

GmmModel fit_gmm(const std::vector<Vec2>& features, const GmmOptions& opts) {
  if (features.size() < 2) throw InputError("fit_gmm: need at least 2 feature vectors");

  GmmModel model;
  const size_t n = features.size();
  Vec2 mean = Vec2::Zero();
  for (const Vec2& f : features) mean += f;
  mean /= static_cast<double>(n);
  Vec2 var = Vec2::Zero();
  for (const Vec2& f : features) var += (f - mean).cwiseAbs2();
  var /= static_cast<double>(n);
  model.feature_mean = mean;
  for (int k = 0; k < 2; ++k) {
    const double s = std::sqrt(var[k]);
    model.feature_scale[k] = s < 1e-12 ? 1.0 : s;
  }

  std::vector<Vec2> pts(n);
  for (size_t i = 0; i < n; ++i) pts[i] = model.standardize(features[i]);

  // Degenerate input: indistinguishable entities form a single population.
  bool identical = true;
  for (const Vec2& p : pts)
    if ((p - pts[0]).norm() > 1e-9) {
      identical = false;
      break;
    }
  if (identical) {
    GmmModel out = one_component_model(pts, opts, model);
    out.aic2 = std::numeric_limits<double>::infinity();
    return out;
  }

  std::mt19937_64 rng(opts.seed);
  const std::vector<int> assign = kmeans_two(pts, rng, opts.kmeans_iterations);

  std::vector<GmmComponent> comps(2);
  for (int c = 0; c < 2; ++c) {
    std::vector<char> member(n, 0);
    size_t count = 0;
    for (size_t i = 0; i < n; ++i) {
      member[i] = assign[i] == c;
      count += member[i];
    }
    const double w = std::max(static_cast<double>(count) / static_cast<double>(n), 1e-6);
    comps[c] = moment_fit(pts, member, w, opts.variance_floor);
  }
  {
    const double wsum = comps[0].weight + comps[1].weight;
    comps[0].weight /= wsum;
    comps[1].weight /= wsum;
  }

  double prev_ll = -std::numeric_limits<double>::infinity();
  bool converged = false;
  std::vector<double> resp(n);  // responsibility of component 1
  for (int it = 0; it < opts.max_iterations; ++it) {
    double ll = 0.0;
    Vec2 sum[2] = {Vec2::Zero(), Vec2::Zero()};
    double nk[2] = {0.0, 0.0};
    for (size_t i = 0; i < n; ++i) {
      const double l0 = std::log(comps[0].weight) + log_gauss_diag(pts[i], comps[0]);
      const double l1 = std::log(comps[1].weight) + log_gauss_diag(pts[i], comps[1]);
      const double norm = log_sum_exp(l0, l1);
      ll += norm;
      resp[i] = std::exp(l1 - norm);
      nk[0] += 1.0 - resp[i];
      nk[1] += resp[i];
      sum[0] += (1.0 - resp[i]) * pts[i];
      sum[1] += resp[i] * pts[i];
    }
    for (int c = 0; c < 2; ++c) {
      const double denom = std::max(nk[c], 1e-10);
      comps[c].mean = sum[c] / denom;
      Vec2 v = Vec2::Zero();
      for (size_t i = 0; i < n; ++i) {
        const double r = c == 1 ? resp[i] : 1.0 - resp[i];
        v += r * (pts[i] - comps[c].mean).cwiseAbs2();
      }
      comps[c].variance = (v / denom).cwiseMax(opts.variance_floor);
      comps[c].weight = std::max(nk[c] / static_cast<double>(n), 1e-12);
    }
    const double wsum = comps[0].weight + comps[1].weight;
    comps[0].weight /= wsum;
    comps[1].weight /= wsum;

    if (std::abs(ll - prev_ll) < opts.tolerance) {
      converged = true;
      prev_ll = ll;
      break;
    }
    prev_ll = ll;
  }

  model.component_count = 2;
  model.components = comps;
  model.converged = converged;
  model.log_likelihood = total_log_likelihood(pts, comps);

  // 9 free parameters: 2 diagonal covariances, 2 means, 1 mixing weight.
  // The AIC is evaluated against the density of the raw (unstandardized)
  // features: standardization shifts the log-likelihood by n*log of the
  // scale product, and the sign test is meaningful only before that shift.
  const double raw_ll =
      model.log_likelihood -
      static_cast<double>(n) * std::log(model.feature_scale[0] * model.feature_scale[1]);
  model.aic2 = 2.0 * 9.0 - 2.0 * raw_ll;
  if (model.aic2 > 0.0) return one_component_model(pts, opts, model);

  model.static_component = comps[0].mean[0] <= comps[1].mean[0] ? 0 : 1;
  return model;
}

Classification classify(const GmmModel& model, const Vec2& raw_feature, double theta) {
  if (model.components.empty()) throw InputError("classify: model not fitted");
  Classification out;
  if (model.component_count == 1) return out;

  const Vec2 x = model.standardize(raw_feature);
  const int s = model.static_component;
  const int d = 1 - s;
  const double ls = std::log(model.components[s].weight) + log_gauss_diag(x, model.components[s]);
  const double ld = std::log(model.components[d].weight) + log_gauss_diag(x, model.components[d]);
  out.posterior = std::exp(ld - log_sum_exp(ls, ld));
  out.dynamic = out.posterior > theta;
  return out;
}

std::set<int32_t> DynamicObjectRegistry::dynamic_set() const {
  std::set<int32_t> out;
  for (const auto& [id, dyn] : state)
    if (dyn) out.insert(id);
  return out;
}

bool DynamicObjectRegistry::is_dynamic(int32_t id) const {
  const auto it = state.find(id);
  return it != state.end() && it->second;
}

void update_registry(DynamicObjectRegistry& registry,
                     const std::map<int32_t, bool>& frame_classifications,
                     int streak_to_static) {
  for (const auto& [id, dynamic] : frame_classifications) {
    if (dynamic) {
      registry.state[id] = true;
      registry.static_streak[id] = 0;
      continue;
    }
    if (registry.is_dynamic(id)) {
      int& streak = registry.static_streak[id];
      ++streak;
      if (streak >= streak_to_static) {
        registry.state[id] = false;
        streak = 0;
      }
    } else {
      registry.state[id] = false;
      registry.static_streak[id] = 0;
    }
  }
}

std::vector<size_t> prune_set(const DynamicObjectRegistry& registry, const GaussianMap& map) {
  const std::set<int32_t> dyn = registry.dynamic_set();
  std::vector<size_t> out;
  if (dyn.empty()) return out;
  for (size_t i = 0; i < map.size(); ++i)
    if (dyn.count(map.primitives()[i].object_id)) out.push_back(i);
  return out;
}

void write_loss_flows_csv(const std::map<int, std::vector<LossFlowRecord>>& flows_by_frame,
                          const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open loss-flow CSV for writing: " + path);
  out << "frame,object_id,iteration,loss\n";
  out.precision(17);
  for (const auto& [frame, records] : flows_by_frame) {
    for (const LossFlowRecord& rec : records) {
      for (size_t k = 0; k < rec.values.size(); ++k)
        out << frame << ',' << rec.object_id << ',' << k << ',' << rec.values[k] << '\n';
    }
  }
  if (!out) throw IoError("failed writing loss-flow CSV: " + path);
}

}  // namespace fsp
