// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
#include <omp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "lcn4/cell_clustering.hpp"
#include "lcn4/config.hpp"
#include "lcn4/constell.hpp"
#include "lcn4/gradcheck.hpp"
#include "lcn4/metrics.hpp"
#include "lcn4/ops.hpp"
#include "lcn4/position_encoding.hpp"
#include "lcn4/runner.hpp"
#include "lcn4/synth.hpp"
#include "lcn4/tensor.hpp"
#include "lcn4/training.hpp"
#include "oracles/oracles.hpp"

using namespace lcn4;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and budgets.
constexpr double kGradTol = 1e-3;
constexpr std::size_t kGradMaxNumel = 256;
constexpr double kGradSeconds = 60.0;
constexpr double kOracleTol = 1e-10;
constexpr int kOracleCases = 20;
constexpr double kOracleSeconds = 30.0;
constexpr double kFreqTol = 1e-12;
constexpr double kSoftmaxSumTol = 1e-10;
constexpr double kAttentionTol = 1e-12;
constexpr double kFusionTol = 1e-12;
constexpr std::size_t kDisjointEpisodes = 1000;
constexpr double kDeskMinAccuracy = 55.0;  // percent, 5-way 1-shot novel
constexpr std::size_t kDeskEvalEpisodes = 200;
constexpr double kDeskSeconds = 600.0;
constexpr double kCiTol = 1e-12;
constexpr double kConfusionRowTol = 1e-9;

struct Outcome {
  bool pass = true;
  std::string detail;
};

using Vec = std::vector<double>;

Vec values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

Tensor uniform(Shape shape, std::mt19937_64& rng, bool grad = false, double lo = -1.0, double hi = 1.0) {
  return Tensor::uniform(std::move(shape), rng, lo, hi, grad);
}

std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

Tensor weighted(const Tensor& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sum(mul(y, Tensor::uniform(y.shape(), rng, -1.0, 1.0)));
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, pattern, a, b, c);
  return buf;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("lcn4_acceptance_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// 1 -----------------------------------------------------------------------
Outcome gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  struct Case {
    std::string name;
    ScalarFn f;
    Tensor x;
  };
  std::vector<Case> cases;
  Tensor other = uniform({4, 6}, rng, false, 0.5, 1.5);
  Tensor pos = uniform({4, 6}, rng, true, 0.3, 1.3);
  cases.push_back({"add", [=](const Tensor& t) { return weighted(add(t, other), 1); }, pos});
  cases.push_back({"sub", [=](const Tensor& t) { return weighted(sub(other, t), 2); }, pos});
  cases.push_back({"mul", [=](const Tensor& t) { return weighted(mul(t, other), 3); }, pos});
  cases.push_back({"div", [=](const Tensor& t) { return weighted(div(other, t), 4); }, pos});
  cases.push_back({"exp", [](const Tensor& t) { return weighted(exp(t), 5); }, pos});
  cases.push_back({"log", [](const Tensor& t) { return weighted(log(t), 6); }, pos});
  cases.push_back({"sin", [](const Tensor& t) { return weighted(sin(t), 7); }, pos});
  cases.push_back({"cos", [](const Tensor& t) { return weighted(cos(t), 8); }, pos});
  cases.push_back({"relu", [](const Tensor& t) { return weighted(relu(sub(t, Tensor::scalar(0.8))), 9); }, pos});

  Tensor b = uniform({6, 5}, rng);
  cases.push_back({"matmul", [=](const Tensor& t) { return weighted(matmul(t, b), 10); }, uniform({4, 6}, rng, true)});
  Tensor kernel = uniform({3, 2, 3, 3}, rng);
  cases.push_back({"conv2d", [=](const Tensor& t) { return weighted(conv2d(t, kernel), 11); }, uniform({2, 2, 6, 5}, rng, true)});
  Tensor image = uniform({2, 2, 5, 5}, rng);
  cases.push_back({"conv2d/kernel", [=](const Tensor& t) { return weighted(conv2d(image, t), 12); }, uniform({3, 2, 3, 3}, rng, true)});
  cases.push_back({"maxpool2d", [](const Tensor& t) { return weighted(maxpool2d(t), 13); }, uniform({2, 3, 6, 4}, rng, true)});
  Tensor gamma = uniform({3}, rng, false, 0.5, 1.5), beta = uniform({3}, rng);
  cases.push_back({"batchnorm",
                   [=](const Tensor& t) {
                     BatchNormState state(3);
                     return weighted(batchnorm2d(t, gamma, beta, state, true), 14);
                   },
                   uniform({3, 3, 4, 4}, rng, true)});
  cases.push_back({"softmax", [](const Tensor& t) { return weighted(softmax(t, 1), 15); }, uniform({4, 7, 3}, rng, true, -2, 2)});
  cases.push_back({"cumulative_sum", [](const Tensor& t) { return weighted(cumulative_sum(t, 2), 16); }, uniform({3, 4, 5}, rng, true)});

  Tensor centres = uniform({5, 4}, rng);
  cases.push_back({"cluster_distances",
                   [=](const Tensor& t) {
                     CentroidBank bank(5, 4);
                     bank.load(centres);
                     bank.set_training(false);
                     return weighted(cluster_distances(t, bank), 17);
                   },
                   uniform({2, 3, 3, 4}, rng, true)});
  cases.push_back({"fdc_encode", [](const Tensor& t) { return weighted(pe::fdc_encode(t, 8, 1.0).encoding, 18); },
                   uniform({2, 3, 4, 8}, rng, true, 0.0, 0.5)});
  AttentionParams attn = AttentionParams::init(8, 2, rng);
  Tensor attn_v = uniform({2, 5, 8}, rng), attn_m = uniform({2, 5, 8}, rng);
  cases.push_back({"multihead_attention/qk", [=](const Tensor& t) { return weighted(multihead_attention(t, attn_v, attn), 19); },
                   uniform({2, 5, 8}, rng, true)});
  cases.push_back({"multihead_attention/v", [=](const Tensor& t) { return weighted(multihead_attention(attn_m, t, attn), 20); },
                   uniform({2, 5, 8}, rng, true)});

  const std::vector<std::size_t> cls_labels{0, 3, 1, 2, 3, 0};
  Tensor classifier = uniform({5, 4}, rng);
  cases.push_back({"classification_loss", [=](const Tensor& t) { return classification_loss(t, classifier, cls_labels); },
                   uniform({6, 5}, rng, true)});
  const auto sl = data::episode_labels(3, 2), ql = data::episode_labels(3, 3);
  Tensor support = uniform({6, 5}, rng);
  cases.push_back({"meta_loss/query",
                   [=](const Tensor& t) { return meta_loss(support, sl, t, ql, 3, Tensor::scalar(10.0)); },
                   uniform({9, 5}, rng, true)});
  Tensor query = uniform({9, 5}, rng);
  cases.push_back({"meta_loss/support",
                   [=](const Tensor& t) { return meta_loss(t, sl, query, ql, 3, Tensor::scalar(10.0)); },
                   uniform({6, 5}, rng, true)});

  Outcome out;
  double worst = 0.0;
  std::string worst_name;
  for (const Case& c : cases) {
    if (c.x.numel() > kGradMaxNumel) {
      out.pass = false;
      out.detail += c.name + " input too large; ";
    }
    const GradCheckResult r = finite_diff_check(c.f, c.x);
    if (r.checked == 0 || !(r.max_rel_error < kGradTol)) {
      out.pass = false;
      out.detail += c.name + " failed; ";
    }
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      worst_name = c.name;
    }
  }
  const double secs = seconds_since(t0);
  if (secs > kGradSeconds) out.pass = false;
  out.detail += std::to_string(cases.size()) + " ops, worst rel err " + fmt("%.2e", worst) + " (" +
                worst_name + ") < " + fmt("%.0e", kGradTol) + ", " + fmt("%.2f s", secs);
  return out;
}

// 2 -----------------------------------------------------------------------
Outcome oracle_equivalence() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(202);
  std::map<std::string, double> worst;
  std::map<std::string, int> cases;
  bool pass = true;
  auto record = [&](const std::string& op, const Vec& expected, const Vec& got) {
    const auto v = oracle::check(op, expected, got, kOracleTol);
    pass = pass && v.pass;
    worst[op] = std::max(worst[op], v.deviation);
    ++cases[op];
  };
  for (int c = 0; c < kOracleCases; ++c) {
    const std::size_t m = pick(rng, 1, 30), p = pick(rng, 1, 200), q = pick(rng, 1, 30);
    Tensor a = uniform({m, p}, rng), b = uniform({p, q}, rng);
    record("matmul", oracle::matmul(values(a), values(b), m, p, q), values(matmul(a, b)));

    const std::size_t bs = pick(rng, 1, 3), ci = pick(rng, 1, 4), co = pick(rng, 1, 5);
    const std::size_t h = pick(rng, 1, 10), w = pick(rng, 1, 10), ks = c % 4 == 0 ? 1 : 3;
    Tensor x = uniform({bs, ci, h, w}, rng), k = uniform({co, ci, ks, ks}, rng);
    record("conv2d", oracle::conv2d(values(x), values(k), bs, ci, h, w, co, ks), values(conv2d(x, k)));

    const std::size_t ph = 2 * pick(rng, 1, 6), pw = 2 * pick(rng, 1, 6);
    Tensor img = uniform({bs, ci, ph, pw}, rng);
    record("maxpool2d", oracle::maxpool(values(img), bs * ci, ph, pw), values(maxpool2d(img)));

    const std::size_t ch = pick(rng, 1, 8), kc = pick(rng, 1, 6);
    Tensor u = uniform({bs, h, w, ch}, rng), centres = uniform({kc, ch}, rng);
    CentroidBank bank(kc, ch);
    bank.load(centres);
    bank.set_training(false);
    record("cluster_distances", oracle::distances(values(u), values(centres), bs * h * w, kc, ch),
           values(cluster_distances(u, bank)));

    const std::size_t heads = std::size_t{1} << pick(rng, 0, 2);
    const std::size_t width = heads * pick(rng, 1, 4), tokens = pick(rng, 1, 9);
    AttentionParams params = AttentionParams::init(width, heads, rng);
    params.head_width_scaling = c % 2 == 0;
    Tensor mm = uniform({bs, tokens, width}, rng), vv = uniform({bs, tokens, width}, rng);
    record("multihead_attention",
           oracle::attention(values(mm), values(vv), values(params.wq), values(params.wk), values(params.wv),
                             values(params.w1), values(params.w2), bs, tokens, width, heads,
                             params.head_width_scaling),
           values(multihead_attention(mm, vv, params)));

    const std::size_t n = pick(rng, 1, 12), d = pick(rng, 1, 10), classes = pick(rng, 2, 7);
    Tensor f = uniform({n, d}, rng), wc = uniform({d, classes}, rng);
    std::vector<std::size_t> labels(n);
    for (auto& l : labels) l = pick(rng, 0, classes - 1);
    record("classification_loss", {oracle::classification_loss(values(f), values(wc), labels, n, d, classes)},
           {classification_loss(f, wc, labels).item()});

    const std::size_t way = pick(rng, 2, 5), shot = pick(rng, 1, 3), qn = pick(rng, 1, 4);
    Tensor s = uniform({way * shot, d}, rng), qq = uniform({way * qn, d}, rng);
    const auto sl = data::episode_labels(way, shot), ql = data::episode_labels(way, qn);
    const double temp = 0.5 + c;
    record("meta_loss", {oracle::meta_loss(values(s), sl, values(qq), ql, d, way, temp)},
           {meta_loss(s, sl, qq, ql, way, Tensor::scalar(temp)).item()});
  }
  const double secs = seconds_since(t0);
  Outcome out;
  out.pass = pass && secs <= kOracleSeconds;
  double overall = 0.0;
  int min_cases = kOracleCases;
  for (const auto& [op, dev] : worst) overall = std::max(overall, dev);
  for (const auto& [op, n] : cases) min_cases = std::min(min_cases, n);
  out.pass = out.pass && worst.size() == 7 && min_cases >= kOracleCases;
  out.detail = std::to_string(worst.size()) + " ops x " + std::to_string(min_cases) + " cases, max deviation " +
               fmt("%.2e", overall) + " <= " + fmt("%.0e", kOracleTol) + ", " + fmt("%.2f s", secs);
  return out;
}

// 3 -----------------------------------------------------------------------
Outcome frequency_spot_values() {
  const auto f = pe::frequency_sequence(64);
  const double direct = std::pow(10000.0, -1.0 / 32.0);
  Outcome out;
  out.pass = f.size() == 64 && f[0] == 1.0 && std::abs(f[2] - direct) <= kFreqTol;
  out.detail = "f[0] = " + fmt("%.17g", f[0]) + ", |f[2] - 10000^(-1/32)| = " + fmt("%.1e", std::abs(f[2] - direct)) +
               " <= " + fmt("%.0e", kFreqTol);
  return out;
}

// 4 -----------------------------------------------------------------------
Outcome encoding_invariants() {
  Outcome out;
  std::vector<std::string> notes;

  const auto g = pe::grid_encode(3, 5, 7, 6);
  bool grid_ok = g.x_pe.front() == -1.0 && g.x_pe.back() == 1.0 && g.y_pe.front() == -1.0 && g.y_pe.back() == 1.0;
  const Vec gv = values(g.grid);
  const std::size_t per = 5 * 7 * 6;
  for (std::size_t b = 1; b < 3; ++b) grid_ok = grid_ok && std::equal(gv.begin(), gv.begin() + per, gv.begin() + b * per);
  grid_ok = grid_ok && g.grid.shape() == Shape{3, 5, 7, 6};
  notes.push_back(std::string("grid ") + (grid_ok ? "ok" : "BAD"));

  const std::size_t k = 16;
  const Vec sc = values(pe::sincos_encode(2, 4, 4, k));
  bool sincos_ok = true;
  for (std::size_t axis = 0; axis < 2; ++axis) {
    for (std::size_t j = 0; j < k / 4; ++j) {
      sincos_ok = sincos_ok && sc[axis * k / 2 + j] == 0.0 && sc[axis * k / 2 + k / 4 + j] == 1.0;
    }
  }
  notes.push_back(std::string("sincos(0,0) ") + (sincos_ok ? "ok" : "BAD"));

  std::mt19937_64 rng(404);
  Tensor d = uniform({2, 6, 5, 16}, rng, false, 0.0, 3.0);
  bool fdc_ok = true;
  for (double amplitude : {1.0, 2.5}) {
    const Tensor e = pe::fdc_encode(d, 16, amplitude).encoding;
    fdc_ok = fdc_ok && e.shape() == Shape{2, 6, 5, 16};
    for (double v : e.data()) fdc_ok = fdc_ok && v >= -amplitude && v <= amplitude;
  }
  notes.push_back(std::string("fdc range/shape ") + (fdc_ok ? "ok" : "BAD"));

  const bool deterministic = values(pe::fdc_encode(d, 16, 1.0).encoding) == values(pe::fdc_encode(d, 16, 1.0).encoding) &&
                             values(pe::sincos_encode(2, 4, 4, k)) == sc && values(pe::grid_encode(3, 5, 7, 6).grid) == gv;
  notes.push_back(std::string("bit-deterministic ") + (deterministic ? "ok" : "BAD"));

  out.pass = grid_ok && sincos_ok && fdc_ok && deterministic;
  for (std::size_t i = 0; i < notes.size(); ++i) out.detail += (i ? ", " : "") + notes[i];
  return out;
}

// 5 -----------------------------------------------------------------------
Outcome attention_invariants() {
  std::mt19937_64 rng(505);
  double worst_row = 0.0, worst_uniform = 0.0, worst_single = 0.0;
  for (int c = 0; c < 10; ++c) {
    const std::size_t heads = std::size_t{1} << pick(rng, 0, 2), k = heads * pick(rng, 1, 4);
    const std::size_t b = pick(rng, 1, 3), t = pick(rng, 2, 9);
    AttentionParams p = AttentionParams::init(k, heads, rng);
    AttentionTrace trace;
    multihead_attention(uniform({b, t, k}, rng, false, -3, 3), uniform({b, t, k}, rng), p, &trace);
    for (std::size_t row = 0; row < b * heads * t; ++row) {
      double s = 0.0;
      for (std::size_t j = 0; j < t; ++j) s += trace.weights[row * t + j];
      worst_row = std::max(worst_row, std::abs(s - 1.0));
    }

    // Identical key rows: every query sees uniform weights.
    const Vec row = values(uniform({k}, rng));
    Vec rows;
    for (std::size_t i = 0; i < t; ++i) rows.insert(rows.end(), row.begin(), row.end());
    Tensor v = uniform({1, t, k}, rng);
    const Vec got = values(multihead_attention(Tensor({1, t, k}, rows), v, p));
    const Vec vv = values(v);
    Vec mean(k, 0.0);
    for (std::size_t i = 0; i < t; ++i)
      for (std::size_t j = 0; j < k; ++j) mean[j] += vv[i * k + j] / static_cast<double>(t);
    Vec expected = oracle::matmul(oracle::matmul(oracle::matmul(mean, values(p.wv), 1, k, k), values(p.w1), 1, k, k),
                                  values(p.w2), 1, k, k);
    for (std::size_t i = 0; i < t; ++i)
      for (std::size_t j = 0; j < k; ++j) worst_uniform = std::max(worst_uniform, std::abs(got[i * k + j] - expected[j]));

    // One head: softmax(M Wq (M Wk)^T / sqrt(k)) V Wv W1 W2 built from primitives.
    AttentionParams single = AttentionParams::init(k, 1, rng);
    Tensor m2 = uniform({t, k}, rng), v2 = uniform({t, k}, rng);
    Tensor logits = scale(matmul(matmul(m2, single.wq), permute(matmul(m2, single.wk), {1, 0})),
                          1.0 / std::sqrt(static_cast<double>(k)));
    const Vec path = values(matmul(matmul(matmul(softmax(logits, 1), matmul(v2, single.wv)), single.w1), single.w2));
    const Vec mha = values(multihead_attention(reshape(m2, {1, t, k}), reshape(v2, {1, t, k}), single));
    worst_single = std::max(worst_single, oracle::max_abs_diff(path, mha));
  }
  Outcome out;
  out.pass = worst_row <= kSoftmaxSumTol && worst_uniform <= kAttentionTol && worst_single <= kAttentionTol;
  out.detail = "row-sum err " + fmt("%.1e", worst_row) + ", uniform-keys err " + fmt("%.1e", worst_uniform) +
               ", h=1 path err " + fmt("%.1e", worst_single);
  return out;
}

// 6 -----------------------------------------------------------------------
Outcome fusion_prediction() {
  std::mt19937_64 rng(606);
  bool scaling_ok = true, zero_ok = true;
  double worst = 0.0;
  for (int c = 0; c < 20; ++c) {
    SimilarityBundle b;
    for (auto& z : b.z) z = uniform({10, 5}, rng);
    SimilarityBundle scaled = b;
    const double s = std::uniform_real_distribution<double>(1e-3, 1e3)(rng);
    for (auto& z : scaled.z) z = scale(z, s);
    scaling_ok = scaling_ok && fuse_and_predict(b) == fuse_and_predict(scaled);

    SimilarityBundle zero = b;
    zero.alpha = zero.beta = zero.gamma = 0.0;
    std::vector<std::size_t> argmax1;
    const Vec z1 = values(b.z[0]);
    for (std::size_t i = 0; i < 10; ++i) {
      argmax1.push_back(static_cast<std::size_t>(std::max_element(z1.begin() + i * 5, z1.begin() + i * 5 + 5) -
                                                 (z1.begin() + i * 5)));
    }
    zero_ok = zero_ok && fuse_and_predict(zero) == argmax1;

    SimilarityBundle same;
    same.z = {b.z[0], b.z[0], b.z[0], b.z[0]};
    const Vec fused = values(fuse(same));
    for (std::size_t i = 0; i < fused.size(); ++i) worst = std::max(worst, std::abs(fused[i] - 2.5 * z1[i]));
  }
  Outcome out;
  out.pass = scaling_ok && zero_ok && worst <= kFusionTol;
  out.detail = std::string("scaling ") + (scaling_ok ? "ok" : "BAD") + ", zero weights " + (zero_ok ? "ok" : "BAD") +
               ", |Z - 2.5 Z1| = " + fmt("%.1e", worst);
  return out;
}

// 7 -----------------------------------------------------------------------
Outcome episodic_protocol() {
  synth::SynthSpec spec;
  spec.base_classes = 4;
  spec.val_classes = 2;
  spec.novel_classes = 6;
  spec.per_class = 20;
  spec.resolution = 32;
  const auto splits = synth::generate(spec);
  std::mt19937_64 rng(707);
  bool shapes = true;
  for (std::size_t shot : {1u, 5u}) {
    const auto ep = data::sample_episode(splits, data::Split::novel, {5, shot, 15}, rng);
    shapes = shapes && ep.support.dim(0) == 5 * shot && ep.query.dim(0) == 75;
  }
  const auto six = data::sample_episode(splits, data::Split::novel, {6, 1, 15}, rng);
  const bool six_ok = six.support.dim(0) == 6 && six.query.dim(0) == 90;

  bool disjoint = true;
  const std::vector<std::size_t> counts(6, 20);
  for (std::size_t e = 0; e < kDisjointEpisodes; ++e) {
    const auto draw = data::draw_episode(counts, {5, 5, 15}, rng);
    for (std::size_t j = 0; j < 5; ++j) {
      std::set<std::size_t> ids(draw.support[j].begin(), draw.support[j].end());
      ids.insert(draw.query[j].begin(), draw.query[j].end());
      disjoint = disjoint && ids.size() == 20;
    }
  }
  std::mt19937_64 a(77), b(77);
  bool reproducible = true;
  for (int e = 0; e < 50; ++e) {
    const auto da = data::draw_episode(counts, {5, 1, 15}, a), db = data::draw_episode(counts, {5, 1, 15}, b);
    reproducible = reproducible && da.classes == db.classes && da.support == db.support && da.query == db.query;
  }
  Outcome out;
  out.pass = shapes && six_ok && disjoint && reproducible;
  out.detail = std::string("shapes ") + (shapes ? "5/25 + 75" : "BAD") + ", disjoint over " +
               std::to_string(kDisjointEpisodes) + " " + (disjoint ? "ok" : "BAD") + ", seeded " +
               (reproducible ? "ok" : "BAD") + ", 6-way " + (six_ok ? "ok" : "BAD");
  return out;
}

// 8 -----------------------------------------------------------------------
Outcome desk_run() {
  omp_set_num_threads(1);
  RunConfig cfg = RunConfig::for_profile("desk");
  cfg.way = 5;
  cfg.shot = 1;
  cfg.eval_episodes = kDeskEvalEpisodes;
  cfg.eval_epochs = 1;
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const auto splits = runner::load_data(cfg);
  const fs::path dir = scratch_dir("desk");
  std::ostringstream log;
  const runner::TrainOutcome result = runner::run_training(cfg, splits, dir, log);
  const double secs = seconds_since(t0);
  Outcome out;
  const double acc = result.report.mean_accuracy;
  out.pass = acc >= kDeskMinAccuracy && secs <= kDeskSeconds;
  double best_val = 0.0;
  for (const auto& m : result.history) best_val = std::max(best_val, m.val_accuracy);
  out.detail = "novel 5-way 1-shot " + result.report.summary() + "% (>= " + fmt("%.0f", kDeskMinAccuracy) +
               "), best val " + fmt("%.1f", best_val) + "%, " + std::to_string(splits.base.size()) + "/" +
               std::to_string(splits.val.size()) + "/" + std::to_string(splits.novel.size()) + " classes, " +
               fmt("%.0f s", secs) + " (<= " + fmt("%.0f", kDeskSeconds) + ")";
  omp_set_num_threads(omp_get_num_procs());
  return out;
}

// Small budget shared by the harness criteria; accuracy is not asserted there.
RunConfig tiny_config() {
  RunConfig c = RunConfig::for_profile("desk");
  c.channels = {4, 4, 4, 4};
  c.clusters = 8;
  c.heads = 2;
  c.fourier_count = 8;
  c.resolution = 32;
  c.epochs = 1;
  c.episodes_per_epoch = 2;
  c.cls_steps_per_epoch = 1;
  c.batch_size = 8;
  c.train_query = 2;
  c.val_episodes = 2;
  c.lr_schedule = {{1, 0.01}};
  c.query = 3;
  c.eval_episodes = 5;
  c.eval_epochs = 1;
  c.synth_base = 5;
  c.synth_val = 2;
  c.synth_novel = 5;
  c.synth_per_class = 10;
  c.validate();
  return c;
}

bool report_valid(const EvalReport& r, std::size_t episodes, double* worst_row) {
  bool ok = std::isfinite(r.mean_accuracy) && r.mean_accuracy >= 0.0 && r.mean_accuracy <= 100.0 &&
            std::isfinite(r.ci95) && r.episode_accuracy.size() == episodes && r.confusion.size() == r.spec.way;
  for (const auto& row : r.confusion) {
    double s = 0.0;
    for (double v : row) s += v;
    *worst_row = std::max(*worst_row, std::abs(s - 1.0));
    ok = ok && row.size() == r.spec.way;
  }
  return ok;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream in(path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

// 9 -----------------------------------------------------------------------
Outcome ablation_harness() {
  const RunConfig base = tiny_config();
  const auto splits = runner::load_data(base);
  Outcome out;
  std::vector<std::string> notes;
  for (const auto& [suite, expected] : {std::pair<std::string, std::size_t>{"table2", 4}, {"table3", 7}}) {
    const auto rows = runner::ablation_suite(suite, base);
    std::set<std::string> distinct;
    for (const auto& r : rows) {
      RunConfig c = r.config;
      c.validate();
      distinct.insert(to_json(c));
    }
    const fs::path dir = scratch_dir("ablate_" + suite);
    std::ostringstream log;
    const auto results = runner::run_ablation(rows, splits, dir, log);
    const auto csv = read_csv(dir / "ablation.csv");
    const std::size_t columns = read_csv(dir / "ablation.csv").front().size();
    bool schema = !csv.empty() && [&] {
      std::stringstream header;
      for (std::size_t i = 0; i < csv[0].size(); ++i) header << (i ? "," : "") << csv[0][i];
      return header.str() == runner::kAblationHeader;
    }();
    schema = schema && csv.size() == rows.size() + 1;
    for (std::size_t i = 1; i < csv.size(); ++i) schema = schema && csv[i].size() == columns;
    const bool ok = rows.size() == expected && distinct.size() == expected && results.size() == expected && schema;
    out.pass = out.pass && ok;
    notes.push_back(suite + ": " + std::to_string(distinct.size()) + " distinct rows, CSV " + (schema ? "ok" : "BAD"));
  }
  for (std::size_t i = 0; i < notes.size(); ++i) out.detail += (i ? "; " : "") + notes[i];
  return out;
}

// 10 ----------------------------------------------------------------------
Outcome metrics_and_branches(double* worst_row) {
  std::mt19937_64 rng(1010);
  bool bcd_ok = true;
  for (int c = 0; c < 200; ++c) {
    const Vec a = values(uniform({9}, rng, false, 0.0, 2.0)), b = values(uniform({9}, rng, false, 0.0, 2.0));
    const double d = bray_curtis(a, b);
    bcd_ok = bcd_ok && bray_curtis(a, a) == 0.0 && d == bray_curtis(b, a) && d >= 0.0 && d <= 1.0;
  }

  const RunConfig base = tiny_config();
  const auto splits = runner::load_data(base);
  const auto rows = runner::ablation_suite("table6", base);
  const fs::path dir = scratch_dir("ablate_table6");
  std::ostringstream log;
  const auto results = runner::run_ablation(rows, splits, dir, log);
  std::set<std::pair<std::string, std::string>> combos;
  bool reports_ok = results.size() == 8;
  const std::size_t episodes = base.eval_episodes * base.eval_epochs;
  for (const auto& r : results) {
    combos.insert({r.row.config.branches, r.row.config.metric});
    reports_ok = reports_ok && report_valid(r.one_shot, episodes, worst_row) && report_valid(r.five_shot, episodes, worst_row);
  }
  const std::set<std::string> subsets{"1000", "1100", "1110", "1111"};
  bool coverage = combos.size() == 8;
  for (const auto& [branches, metric] : combos) coverage = coverage && subsets.count(branches);
  Outcome out;
  out.pass = bcd_ok && reports_ok && coverage;
  out.detail = std::string("bray-curtis properties ") + (bcd_ok ? "ok" : "BAD") + ", " + std::to_string(combos.size()) +
               " branch/metric configurations, reports " + (reports_ok ? "valid" : "INVALID");
  return out;
}

// 11 ----------------------------------------------------------------------
Outcome statistics(double worst_row_from_reports) {
  const std::vector<Vec> lists{{0.2, 0.4, 0.6, 0.8, 1.0},
                               {1.0, 1.0, 1.0},
                               {0.0},
                               {0.52, 0.48, 0.61, 0.39, 0.7, 0.55, 0.44, 0.58}};
  double worst_ci = 0.0;
  for (const Vec& l : lists) {
    const double n = static_cast<double>(l.size());
    double mean = 0.0, var = 0.0;
    for (double v : l) mean += v / n;
    for (double v : l) var += (v - mean) * (v - mean) / n;
    worst_ci = std::max(worst_ci, std::abs(mean_ci95(l).second - 1.96 * std::sqrt(var) / std::sqrt(n)));
  }
  // Known closed form: {0, 1} gives std 0.5, so 1.96 * 0.5 / sqrt(2).
  const Vec two{0.0, 1.0};
  worst_ci = std::max(worst_ci, std::abs(mean_ci95(two).second - 0.98 / std::sqrt(2.0)));

  double worst_row = worst_row_from_reports;
  data::DatasetSplits blank;
  blank.resolution = 2;
  for (std::size_t c = 0; c < 7; ++c) blank.novel.push_back({"c" + std::to_string(c), 20, Vec(20 * 12, 0.0)});
  RandomEncoder enc(1111);
  EvalConfig ec;
  ec.spec = {5, 1, 15};
  ec.episodes_per_epoch = 100;
  ec.epochs = 1;
  report_valid(evaluate(enc, blank, ec), 100, &worst_row);
  Outcome out;
  out.pass = worst_ci <= kCiTol && worst_row <= kConfusionRowTol;
  out.detail = "CI err " + fmt("%.1e", worst_ci) + " <= " + fmt("%.0e", kCiTol) + ", confusion row-sum err " +
               fmt("%.1e", worst_row) + " <= " + fmt("%.0e", kConfusionRowTol);
  return out;
}

}  // namespace

int main() {
  configure_allocator();
  double worst_row = 0.0;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient suite", gradient_suite},
      {"oracle equivalence", oracle_equivalence},
      {"frequency sequence spot values", frequency_spot_values},
      {"encoding invariants", encoding_invariants},
      {"attention invariants", attention_invariants},
      {"fusion and prediction", fusion_prediction},
      {"episodic protocol", episodic_protocol},
      {"end-to-end desk run", desk_run},
      {"ablation harness", ablation_harness},
      {"metrics and branch subsets", [&] { return metrics_and_branches(&worst_row); }},
      {"statistics", [&] { return statistics(worst_row); }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("[%s] %2zu %-32s %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
