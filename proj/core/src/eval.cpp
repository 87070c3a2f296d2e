#include "bgerase/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include <Eigen/Core>
#include <boost/math/distributions/students_t.hpp>
#include <nlohmann/json.hpp>
#include <png.h>

#include "bgerase/distractor.hpp"
#include "bgerase/errors.hpp"

namespace bgerase {

using nlohmann::json;

namespace {

template <typename F>
void parallel_for(std::size_t n, int threads, F&& body) {
  unsigned t = threads > 0 ? static_cast<unsigned>(threads)
                           : std::max(1u, std::thread::hardware_concurrency());
  t = static_cast<unsigned>(std::min<std::size_t>(t, n));
  if (t <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < t; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

std::vector<double> feature_from_map(const Encoder<float>& encoder, const FeatureMap<float>& f,
                                     ProbeFeatures source) {
  if (source == ProbeFeatures::backbone) {
    const GlobalPooled<float> g = global_max_pool(f);
    return {g.values.begin(), g.values.end()};
  }
  const Projection<float> p = encoder.project(f);
  return {p.raw.begin(), p.raw.end()};
}

int argmax(const std::vector<double>& v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

std::vector<double> clip_feature(const Encoder<float>& encoder, const VideoClip& clip,
                                 ProbeFeatures source) {
  return feature_from_map(encoder, encoder.forward(clip), source);
}

FeatureRequest feature_request(const ExperimentConfig& cfg, ProbeFeatures source) {
  FeatureRequest r;
  r.source = source;
  r.clips = cfg.eval_clips;
  r.clip = cfg.clip_params();
  r.crop_height = cfg.clip_crop_height;
  r.crop_width = cfg.clip_crop_width;
  r.threads = cfg.run_threads;
  return r;
}

VideoFeatures extract_features(const Encoder<float>& encoder, const Dataset& data,
                               const std::vector<const VideoRecord*>& records,
                               const FeatureRequest& req) {
  VideoFeatures out;
  out.ids.resize(records.size());
  out.labels.resize(records.size());
  out.clips.resize(records.size());
  parallel_for(records.size(), req.threads, [&](std::size_t i) {
    const VideoRecord& rec = *records[i];
    const RawVideo& raw = data.video(rec);
    const std::vector<int> starts =
        uniform_clip_starts(raw.shape.frames, req.clip.length, req.clip.stride, req.clips);
    out.ids[i] = rec.id;
    out.labels[i] = rec.class_label;
    for (int s : starts) {
      VideoClip clip = sample_clip_at(raw, s, req.clip.length, req.clip.stride);
      if (req.make_static) clip = make_static(clip, clip.frames() / 2);
      if (req.crop_height > 0 && req.crop_width > 0) {
        clip = crop(clip, center_crop_window(clip.shape(), req.crop_height, req.crop_width));
      }
      out.clips[i].push_back(clip_feature(encoder, clip, req.source));
    }
  });
  return out;
}

// -- linear probe -----------------------------------------------------------

LinearProbe LinearProbe::fit(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                             int num_classes, const ProbeConfig& cfg) {
  using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  if (x.empty()) throw InputError("linear probe needs training features");
  if (x.size() != y.size()) throw InputError("linear probe feature/label count mismatch");
  if (num_classes < 2) throw InputError("linear probe needs at least 2 classes");
  const std::size_t N = x.size(), D = x[0].size();
  const int K = num_classes;
  LinearProbe p;
  p.classes_ = K;
  p.mean_.assign(D, 0.0);
  p.inv_std_.assign(D, 1.0);
  Mat X(N, D);
  for (std::size_t i = 0; i < N; ++i) {
    if (x[i].size() != D) throw InputError("linear probe features have inconsistent dims");
    if (y[i] < 0 || y[i] >= K) throw InputError("linear probe label out of range");
    for (std::size_t d = 0; d < D; ++d) X(i, d) = x[i][d];
  }
  for (std::size_t d = 0; d < D; ++d) {
    const double mu = X.col(d).mean();
    const double var = (X.col(d).array() - mu).square().mean();
    p.mean_[d] = mu;
    p.inv_std_[d] = var > 1e-24 ? 1.0 / std::sqrt(var) : 0.0;
    X.col(d) = (X.col(d).array() - mu) * p.inv_std_[d];
  }
  Mat Y = Mat::Zero(N, K);
  for (std::size_t i = 0; i < N; ++i) Y(i, y[i]) = 1.0;

  // Step size from the curvature bound 0.5 * lambda_max(X^T X / N) + l2.
  const Mat G = X.transpose() * X / static_cast<double>(N);
  Eigen::VectorXd v = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(D));
  double lambda = 0.0;
  for (int it = 0; it < 100; ++it) {
    const Eigen::VectorXd w = G * v;
    const double n = w.norm();
    if (n <= 0.0) break;
    lambda = v.dot(w) / v.squaredNorm();
    v = w / n;
  }
  const double step = cfg.lr / (0.5 * lambda + cfg.l2 + 1e-12);

  Mat W = Mat::Zero(K, D), VW = Mat::Zero(K, D);
  Eigen::RowVectorXd b = Eigen::RowVectorXd::Zero(K), Vb = Eigen::RowVectorXd::Zero(K);
  Mat P(N, K);
  for (int it = 0; it < cfg.iterations; ++it) {
    P.noalias() = X * W.transpose();
    P.rowwise() += b;
    double loss = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      const double m = P.row(i).maxCoeff();
      P.row(i) = (P.row(i).array() - m).exp();
      const double z = P.row(i).sum();
      P.row(i) /= z;
      loss -= std::log(std::max(P(i, y[i]), 1e-300));
    }
    loss /= static_cast<double>(N);
    p.final_loss_ = loss + 0.5 * cfg.l2 * W.squaredNorm();
    P -= Y;
    P /= static_cast<double>(N);
    const Mat gW = P.transpose() * X + cfg.l2 * W;
    const Eigen::RowVectorXd gb = P.colwise().sum();
    VW = cfg.momentum * VW + gW;
    Vb = cfg.momentum * Vb + gb;
    W -= step * VW;
    b -= step * Vb;
  }
  p.weight_.assign(W.data(), W.data() + W.size());
  p.bias_.assign(b.data(), b.data() + b.size());
  return p;
}

std::vector<double> LinearProbe::logits(const std::vector<double>& f) const {
  if (f.size() != mean_.size()) {
    throw InputError("probe expects " + std::to_string(mean_.size()) + "-dim features, got " +
                     std::to_string(f.size()));
  }
  const std::size_t D = mean_.size();
  std::vector<double> xs(D);
  for (std::size_t d = 0; d < D; ++d) xs[d] = (f[d] - mean_[d]) * inv_std_[d];
  std::vector<double> out(classes_);
  for (int k = 0; k < classes_; ++k) {
    double acc = bias_[k];
    const double* w = weight_.data() + static_cast<std::size_t>(k) * D;
    for (std::size_t d = 0; d < D; ++d) acc += w[d] * xs[d];
    out[k] = acc;
  }
  return out;
}

ProbeResult score_videos(const std::vector<std::vector<double>>& scores,
                         const std::vector<int>& labels, int num_classes, std::string split,
                         int clips_averaged) {
  if (scores.size() != labels.size()) throw InputError("score_videos: one label per video");
  ProbeResult r;
  r.split = std::move(split);
  r.num_clips_averaged = clips_averaged;
  r.per_class_accuracy.assign(num_classes, 0.0);
  r.per_class_count.assign(num_classes, 0);
  std::vector<int> correct(num_classes, 0);
  int total_correct = 0;
  for (std::size_t v = 0; v < scores.size(); ++v) {
    const int pred = argmax(scores[v]);
    const int label = labels[v];
    r.predictions.push_back(pred);
    ++r.per_class_count[label];
    if (pred == label) {
      ++correct[label];
      ++total_correct;
    }
  }
  for (int k = 0; k < num_classes; ++k) {
    if (r.per_class_count[k] > 0) {
      r.per_class_accuracy[k] = static_cast<double>(correct[k]) / r.per_class_count[k];
    }
  }
  r.top1 = scores.empty() ? 0.0 : static_cast<double>(total_correct) / scores.size();
  return r;
}

ProbeResult probe_predict(const LinearProbe& probe, const VideoFeatures& test, int num_classes,
                          std::string split) {
  std::vector<std::vector<double>> scores;
  int clips = 0;
  for (const auto& video : test.clips) {
    if (video.empty()) throw InputError("test video without clips");
    clips = static_cast<int>(video.size());
    std::vector<double> sum(num_classes, 0.0);
    for (const auto& f : video) {
      const std::vector<double> l = probe.logits(f);
      for (int k = 0; k < num_classes; ++k) sum[k] += l[k];
    }
    scores.push_back(std::move(sum));
  }
  return score_videos(scores, test.labels, num_classes, std::move(split), clips);
}

namespace {

void flatten(const VideoFeatures& f, const std::vector<std::size_t>& videos,
             std::vector<std::vector<double>>& x, std::vector<int>& y) {
  for (std::size_t v : videos) {
    for (const auto& c : f.clips[v]) {
      x.push_back(c);
      y.push_back(f.labels[v]);
    }
  }
}

}  // namespace

ProbeResult linear_probe(const VideoFeatures& train, const VideoFeatures& test, int num_classes,
                         const ProbeConfig& cfg, std::string split) {
  std::vector<std::size_t> all(train.clips.size());
  std::iota(all.begin(), all.end(), 0);
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  flatten(train, all, x, y);
  const LinearProbe probe = LinearProbe::fit(x, y, num_classes, cfg);
  return probe_predict(probe, test, num_classes, std::move(split));
}

ProbeResult cross_fit_probe(const VideoFeatures& features, int num_classes, int folds,
                            const ProbeConfig& cfg, std::string split) {
  if (folds < 2) throw ConfigError("cross-fit needs at least 2 folds");
  const std::size_t n = features.clips.size();
  std::vector<int> fold(n);
  std::vector<int> seen(num_classes, 0);
  for (std::size_t v = 0; v < n; ++v) fold[v] = seen[features.labels[v]]++ % folds;

  std::vector<int> predictions(n, -1);
  for (int k = 0; k < folds; ++k) {
    std::vector<std::size_t> tr, te;
    for (std::size_t v = 0; v < n; ++v) (fold[v] == k ? te : tr).push_back(v);
    if (te.empty()) continue;
    std::vector<std::vector<double>> x;
    std::vector<int> y;
    flatten(features, tr, x, y);
    const LinearProbe probe = LinearProbe::fit(x, y, num_classes, cfg);
    VideoFeatures sub;
    for (std::size_t v : te) {
      sub.ids.push_back(features.ids[v]);
      sub.labels.push_back(features.labels[v]);
      sub.clips.push_back(features.clips[v]);
    }
    const ProbeResult part = probe_predict(probe, sub, num_classes, split);
    for (std::size_t i = 0; i < te.size(); ++i) predictions[te[i]] = part.predictions[i];
  }
  ProbeResult r;
  r.split = std::move(split);
  r.per_class_accuracy.assign(num_classes, 0.0);
  r.per_class_count.assign(num_classes, 0);
  r.num_clips_averaged = n > 0 ? static_cast<int>(features.clips[0].size()) : 0;
  std::vector<int> correct(num_classes, 0);
  int total = 0;
  for (std::size_t v = 0; v < n; ++v) {
    const int label = features.labels[v];
    ++r.per_class_count[label];
    if (predictions[v] == label) {
      ++correct[label];
      ++total;
    }
  }
  for (int k = 0; k < num_classes; ++k) {
    if (r.per_class_count[k] > 0) {
      r.per_class_accuracy[k] = static_cast<double>(correct[k]) / r.per_class_count[k];
    }
  }
  r.top1 = n > 0 ? static_cast<double>(total) / n : 0.0;
  r.predictions = std::move(predictions);
  return r;
}

std::string probe_result_json(const ProbeResult& r) {
  return json{{"schema_version", kSchemaVersion},
              {"split", r.split},
              {"top1", r.top1},
              {"per_class_accuracy", r.per_class_accuracy},
              {"per_class_count", r.per_class_count},
              {"num_clips_averaged", r.num_clips_averaged}}
      .dump(2);
}

std::string probe_result_text(const ProbeResult& r) {
  std::ostringstream os;
  os << "split " << r.split << "  top1 " << std::fixed << std::setprecision(4) << r.top1
     << "  clips " << r.num_clips_averaged << "\n";
  os << std::setw(6) << "class" << std::setw(8) << "count" << std::setw(10) << "acc" << "\n";
  for (std::size_t k = 0; k < r.per_class_accuracy.size(); ++k) {
    os << std::setw(6) << k << std::setw(8) << r.per_class_count[k] << std::setw(10)
       << r.per_class_accuracy[k] << "\n";
  }
  return os.str();
}

// -- retrieval --------------------------------------------------------------

RecallTable retrieval_recall(const std::vector<std::vector<double>>& gallery,
                             const std::vector<int>& gallery_labels,
                             const std::vector<std::vector<double>>& queries,
                             const std::vector<int>& query_labels, const std::vector<int>& ks) {
  if (gallery.empty()) throw InputError("retrieval gallery is empty");
  if (gallery.size() != gallery_labels.size() || queries.size() != query_labels.size()) {
    throw InputError("retrieval feature/label count mismatch");
  }
  auto normalized = [](const std::vector<std::vector<double>>& v) {
    std::vector<std::vector<double>> out = v;
    for (auto& row : out) {
      double ss = 0.0;
      for (double x : row) ss += x * x;
      const double inv = ss > 0.0 ? 1.0 / std::sqrt(ss) : 0.0;
      for (double& x : row) x *= inv;
    }
    return out;
  };
  const auto g = normalized(gallery);
  const auto q = normalized(queries);
  const std::size_t dim = g[0].size();

  RecallTable t;
  t.requested_k = ks;
  for (int k : ks) {
    if (k < 1) throw InputError("retrieval K must be >= 1");
    int eff = k;
    if (static_cast<std::size_t>(k) > g.size()) {
      eff = static_cast<int>(g.size());
      t.warnings.push_back("K=" + std::to_string(k) + " exceeds gallery size " +
                           std::to_string(g.size()) + "; clamped");
    }
    t.k.push_back(eff);
  }
  t.recall.assign(ks.size(), 0.0);
  std::vector<std::size_t> order(g.size());
  std::vector<double> sim(g.size());
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (q[i].size() != dim) throw InputError("retrieval query dimension mismatch");
    for (std::size_t j = 0; j < g.size(); ++j) {
      double s = 0.0;
      for (std::size_t d = 0; d < dim; ++d) s += q[i][d] * g[j][d];
      sim[j] = s;
    }
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return sim[a] > sim[b]; });
    // Rank (1-based) of the first gallery item sharing the query's class.
    std::size_t first_hit = g.size() + 1;
    for (std::size_t r = 0; r < order.size(); ++r) {
      if (gallery_labels[order[r]] == query_labels[i]) {
        first_hit = r + 1;
        break;
      }
    }
    for (std::size_t k = 0; k < t.k.size(); ++k) {
      if (first_hit <= static_cast<std::size_t>(t.k[k])) t.recall[k] += 1.0;
    }
  }
  if (!q.empty()) {
    for (double& r : t.recall) r /= static_cast<double>(q.size());
  }
  return t;
}

std::string recall_json(const RecallTable& t) {
  json rows = json::array();
  for (std::size_t i = 0; i < t.k.size(); ++i) {
    rows.push_back(json{{"k", t.k[i]}, {"requested_k", t.requested_k[i]}, {"recall", t.recall[i]}});
  }
  return json{{"schema_version", kSchemaVersion}, {"recall_at_k", rows}, {"warnings", t.warnings}}
      .dump(2);
}

std::string recall_text(const RecallTable& t) {
  std::ostringstream os;
  os << std::setw(6) << "K" << std::setw(12) << "recall" << "\n";
  for (std::size_t i = 0; i < t.k.size(); ++i) {
    os << std::setw(6) << t.k[i] << std::setw(11) << std::fixed << std::setprecision(2)
       << 100.0 * t.recall[i] << "%\n";
  }
  for (const auto& w : t.warnings) os << "warning: " << w << "\n";
  return os.str();
}

// -- statistics -------------------------------------------------------------

PearsonResult pearson(const std::vector<double>& x, const std::vector<double>& y) {
  PearsonResult r;
  r.n = static_cast<int>(x.size());
  if (x.size() != y.size()) throw InputError("pearson: series lengths differ");
  if (x.size() < 3) {
    r.error = "need at least 3 points";
    return r;
  }
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) {
    r.error = sxx <= 0.0 ? "zero variance in x" : "zero variance in y";
    return r;
  }
  r.defined = true;
  r.rho = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double dof = n - 2.0;
  if (std::abs(r.rho) >= 1.0) {
    r.t = std::copysign(std::numeric_limits<double>::infinity(), r.rho);
    r.p_value = 0.0;
    return r;
  }
  r.t = r.rho * std::sqrt(dof / (1.0 - r.rho * r.rho));
  const boost::math::students_t dist(dof);
  r.p_value = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t))));
  return r;
}

BiasDiagnostic bias_correlation(const ProbeResult& baseline, const ProbeResult& be,
                                const ProbeResult& static_probe, Improvement mode) {
  const std::size_t K = static_probe.per_class_accuracy.size();
  if (baseline.per_class_accuracy.size() != K || be.per_class_accuracy.size() != K) {
    throw InputError("bias correlation needs results over the same class set");
  }
  BiasDiagnostic d;
  d.improvement = mode;
  d.static_acc_per_class = static_probe.per_class_accuracy;
  for (std::size_t k = 0; k < K; ++k) {
    const double base = baseline.per_class_accuracy[k];
    const double diff = be.per_class_accuracy[k] - base;
    if (mode == Improvement::relative) {
      d.improvement_per_class.push_back(base > 0.0 ? diff / base
                                                   : std::numeric_limits<double>::quiet_NaN());
    } else {
      d.improvement_per_class.push_back(diff);
    }
  }
  const bool finite = std::all_of(d.improvement_per_class.begin(), d.improvement_per_class.end(),
                                  [](double v) { return std::isfinite(v); });
  if (!finite) {
    d.correlation.n = static_cast<int>(K);
    d.correlation.error = "relative improvement undefined for a class with zero baseline accuracy";
    return d;
  }
  d.correlation = pearson(d.static_acc_per_class, d.improvement_per_class);
  return d;
}

std::string bias_json(const BiasDiagnostic& d) {
  json points = json::array();
  for (std::size_t k = 0; k < d.static_acc_per_class.size(); ++k) {
    points.push_back(json{{"class", k},
                          {"static_acc", d.static_acc_per_class[k]},
                          {"improvement", number_or_null(d.improvement_per_class[k])}});
  }
  json j{{"schema_version", kSchemaVersion},
         {"improvement", d.improvement == Improvement::absolute ? "absolute" : "relative"},
         {"n", d.correlation.n},
         {"defined", d.correlation.defined},
         {"scatter", points}};
  if (d.correlation.defined) {
    j["pearson_rho"] = d.correlation.rho;
    j["p_value"] = d.correlation.p_value;
    j["t"] = number_or_null(d.correlation.t);
  } else {
    j["error"] = d.correlation.error;
  }
  return j.dump(2);
}

// -- saliency ---------------------------------------------------------------

std::vector<float> resize_trilinear(const std::vector<float>& in, int t0, int h0, int w0, int t1,
                                    int h1, int w1) {
  if (in.size() != static_cast<std::size_t>(t0) * h0 * w0) {
    throw InputError("resize_trilinear: input size does not match dims");
  }
  struct Tap {
    int i0, i1;
    double f;
  };
  auto taps = [](int in_n, int out_n) {
    std::vector<Tap> out(out_n);
    const double scale = static_cast<double>(in_n) / out_n;
    for (int o = 0; o < out_n; ++o) {
      double src = (o + 0.5) * scale - 0.5;
      src = std::clamp(src, 0.0, static_cast<double>(in_n - 1));
      const int i0 = static_cast<int>(std::floor(src));
      const int i1 = std::min(i0 + 1, in_n - 1);
      out[o] = {i0, i1, src - i0};
    }
    return out;
  };
  const auto tt = taps(t0, t1), hh = taps(h0, h1), ww = taps(w0, w1);
  auto at = [&](int t, int y, int x) {
    return static_cast<double>(in[(static_cast<std::size_t>(t) * h0 + y) * w0 + x]);
  };
  std::vector<float> out(static_cast<std::size_t>(t1) * h1 * w1);
  for (int t = 0; t < t1; ++t) {
    for (int y = 0; y < h1; ++y) {
      for (int x = 0; x < w1; ++x) {
        const Tap a = tt[t], b = hh[y], c = ww[x];
        auto plane = [&](int ti) {
          const double top = at(ti, b.i0, c.i0) * (1 - c.f) + at(ti, b.i0, c.i1) * c.f;
          const double bot = at(ti, b.i1, c.i0) * (1 - c.f) + at(ti, b.i1, c.i1) * c.f;
          return top * (1 - b.f) + bot * b.f;
        };
        out[(static_cast<std::size_t>(t) * h1 + y) * w1 + x] =
            static_cast<float>(plane(a.i0) * (1 - a.f) + plane(a.i1) * a.f);
      }
    }
  }
  return out;
}

SaliencyMap saliency_from_features(const FeatureMap<float>& f, int frames, int height, int width) {
  const FeatureShape& s = f.shape;
  const std::size_t vol = s.volume();
  std::vector<float> mean(vol, 0.0f);
  for (int c = 0; c < s.channels; ++c) {
    for (std::size_t i = 0; i < vol; ++i) mean[i] += f.data[c * vol + i];
  }
  for (float& v : mean) v /= static_cast<float>(s.channels);

  SaliencyMap m;
  m.frames = frames;
  m.height = height;
  m.width = width;
  m.values = resize_trilinear(mean, s.frames, s.height, s.width, frames, height, width);
  const auto [lo, hi] = std::minmax_element(m.values.begin(), m.values.end());
  const float min = *lo, max = *hi;
  if (!(max - min > 1e-12f)) {
    m.degenerate = true;
    m.warning = "constant feature map; saliency set to 0.5";
    std::fill(m.values.begin(), m.values.end(), 0.5f);
    return m;
  }
  for (float& v : m.values) v = std::clamp((v - min) / (max - min), 0.0f, 1.0f);
  return m;
}

SaliencyMap saliency_map(const Encoder<float>& encoder, const VideoClip& clip) {
  return saliency_from_features(encoder.forward(clip), clip.frames(), clip.height(), clip.width());
}

double top_fraction_iou(const SaliencyMap& a, const SaliencyMap& b, double fraction) {
  if (a.values.size() != b.values.size()) throw InputError("saliency maps differ in size");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw InputError("fraction must lie in (0,1]");
  const std::size_t n = a.values.size();
  const std::size_t m = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(fraction * n)));
  auto top = [&](const std::vector<float>& v) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return v[i] > v[j]; });
    std::vector<char> mask(n, 0);
    for (std::size_t i = 0; i < m; ++i) mask[idx[i]] = 1;
    return mask;
  };
  const auto ma = top(a.values), mb = top(b.values);
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < n; ++i) {
    inter += ma[i] && mb[i];
    uni += ma[i] || mb[i];
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
}

std::string_view attack_name(Attack a) {
  switch (a) {
    case Attack::static_video: return "static_video";
    case Attack::paste_static_actor: return "paste_static_actor";
    case Attack::add_static_frame: return "add_static_frame";
  }
  return "add_static_frame";
}

Attack parse_attack(std::string_view name) {
  if (name == "static_video") return Attack::static_video;
  if (name == "paste_static_actor") return Attack::paste_static_actor;
  if (name == "add_static_frame") return Attack::add_static_frame;
  throw ConfigError("unknown attack '" + std::string(name) + "'");
}

VideoClip apply_attack(const VideoClip& clip, const AttackSpec& spec) {
  const int frame = spec.frame < 0 ? clip.frames() / 2 : spec.frame;
  if (frame >= clip.frames()) throw InputError("attack frame index out of range");
  switch (spec.kind) {
    case Attack::static_video:
      return make_static(clip, frame);
    case Attack::add_static_frame: {
      DistractorSpec d;
      d.variant = DistractorVariant::intra_frame;
      d.forced_lambda = spec.lambda;
      d.forced_frame = frame;
      Rng rng(spec.seed);
      return make_distractor(clip, d, nullptr, rng).clip;
    }
    case Attack::paste_static_actor: {
      Rng rng(derive_seed(spec.seed, "attack.actor"));
      const double radius = 0.12 * std::min(clip.height(), clip.width());
      const double cy = radius + uniform01(rng) * std::max(0.0, clip.height() - 2 * radius);
      const double cx = radius + uniform01(rng) * std::max(0.0, clip.width() - 2 * radius);
      std::vector<float> color(clip.channels());
      for (float& c : color) c = static_cast<float>(uniform01(rng));
      VideoClip out = clip;
      for (int t = 0; t < clip.frames(); ++t) {
        for (int y = 0; y < clip.height(); ++y) {
          for (int x = 0; x < clip.width(); ++x) {
            const double dy = y + 0.5 - cy, dx = x + 0.5 - cx;
            if (dy * dy + dx * dx > radius * radius) continue;
            for (int c = 0; c < clip.channels(); ++c) out.at(t, y, x, c) = color[c];
          }
        }
      }
      return out;
    }
  }
  throw InputError("unhandled attack");
}

AdversarialReport adversarial_probe(const Encoder<float>& encoder, const VideoClip& clip,
                                    const AttackSpec& spec, const LinearProbe* probe,
                                    ProbeFeatures source) {
  encoder.check_input(clip.shape());
  const VideoClip attacked = apply_attack(clip, spec);
  const FeatureMap<float> f0 = encoder.forward(clip);
  const FeatureMap<float> f1 = encoder.forward(attacked);
  AdversarialReport r;
  r.before = saliency_from_features(f0, clip.frames(), clip.height(), clip.width());
  r.after = saliency_from_features(f1, clip.frames(), clip.height(), clip.width());
  r.iou_top10 = top_fraction_iou(r.before, r.after, 0.1);
  const Projection<float> p0 = encoder.project(f0), p1 = encoder.project(f1);
  double dot = 0.0, n0 = 0.0, n1 = 0.0;
  for (std::size_t i = 0; i < p0.raw.size(); ++i) {
    dot += static_cast<double>(p0.raw[i]) * p1.raw[i];
    n0 += static_cast<double>(p0.raw[i]) * p0.raw[i];
    n1 += static_cast<double>(p1.raw[i]) * p1.raw[i];
  }
  r.embedding_cosine = n0 > 0 && n1 > 0 ? dot / std::sqrt(n0 * n1) : 0.0;
  if (probe != nullptr) {
    r.prediction_before = argmax(probe->logits(feature_from_map(encoder, f0, source)));
    r.prediction_after = argmax(probe->logits(feature_from_map(encoder, f1, source)));
  }
  return r;
}

void write_png(const std::filesystem::path& path, int width, int height,
               const std::vector<std::uint8_t>& rgb) {
  if (rgb.size() != static_cast<std::size_t>(width) * height * 3) {
    throw InputError("write_png: buffer size does not match dims");
  }
  std::FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (fp == nullptr) throw IoError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, info ? &info : nullptr);
    std::fclose(fp);
    throw IoError("libpng failed writing " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) {
    png_write_row(png, const_cast<png_bytep>(rgb.data() + static_cast<std::size_t>(y) * width * 3));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

std::vector<std::filesystem::path> write_saliency_pngs(const std::filesystem::path& dir,
                                                       const std::string& prefix,
                                                       const VideoClip& clip,
                                                       const SaliencyMap& map) {
  if (map.frames != clip.frames() || map.height != clip.height() || map.width != clip.width()) {
    throw InputError("saliency map dims do not match the clip");
  }
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> paths;
  const int H = clip.height(), W = clip.width();
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(H) * W * 3);
  auto heat = [](double v, int channel) {
    const double centre = channel == 0 ? 3.0 : channel == 1 ? 2.0 : 1.0;
    return std::clamp(1.5 - std::abs(4.0 * v - centre), 0.0, 1.0);
  };
  for (int t = 0; t < clip.frames(); ++t) {
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const double s = map.at(t, y, x);
        for (int c = 0; c < 3; ++c) {
          const double px = clip.at(t, y, x, std::min(c, clip.channels() - 1));
          const double v = 0.5 * px + 0.5 * heat(s, c);
          rgb[(static_cast<std::size_t>(y) * W + x) * 3 + c] =
              static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
        }
      }
    }
    char name[32];
    std::snprintf(name, sizeof name, "_%03d.png", t);
    paths.push_back(dir / (prefix + name));
    write_png(paths.back(), W, H, rgb);
  }
  return paths;
}

}  // namespace bgerase
