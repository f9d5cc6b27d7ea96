#include "oracles.hpp"

#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

namespace oracle {

Vec matmul(const Vec& a, const Vec& b, std::size_t m, std::size_t p, std::size_t q) {
  Vec c(m * q, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < q; ++j) {
      long double s = 0.0L;
      for (std::size_t r = 0; r < p; ++r) s += static_cast<long double>(a[i * p + r]) * b[r * q + j];
      c[i * q + j] = static_cast<double>(s);
    }
  return c;
}

Vec conv2d(const Vec& x, const Vec& w, std::size_t batch, std::size_t channels, std::size_t h,
           std::size_t wd, std::size_t out, std::size_t ks) {
  Vec y(batch * out * h * wd, 0.0);
  const long pad = static_cast<long>(ks) / 2;
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t o = 0; o < out; ++o)
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < wd; ++j) {
          long double s = 0.0L;
          for (std::size_t c = 0; c < channels; ++c)
            for (std::size_t u = 0; u < ks; ++u)
              for (std::size_t v = 0; v < ks; ++v) {
                const long yy = static_cast<long>(i + u) - pad;
                const long xx = static_cast<long>(j + v) - pad;
                if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(wd)) continue;
                s += static_cast<long double>(w[((o * channels + c) * ks + u) * ks + v]) *
                     x[((b * channels + c) * h + static_cast<std::size_t>(yy)) * wd + static_cast<std::size_t>(xx)];
              }
          y[((b * out + o) * h + i) * wd + j] = static_cast<double>(s);
        }
  return y;
}

Vec maxpool(const Vec& x, std::size_t planes, std::size_t h, std::size_t w) {
  Vec y;
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i + 1 < h; i += 2)
      for (std::size_t j = 0; j + 1 < w; j += 2) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t u = 0; u < 2; ++u)
          for (std::size_t v = 0; v < 2; ++v) best = std::max(best, x[(p * h + i + u) * w + j + v]);
        y.push_back(best);
      }
  return y;
}

Vec softmax_rows(const Vec& x, std::size_t rows, std::size_t n) {
  Vec y(rows * n);
  for (std::size_t r = 0; r < rows; ++r) {
    double top = x[r * n];
    for (std::size_t i = 1; i < n; ++i) top = std::max(top, x[r * n + i]);
    long double z = 0.0L;
    for (std::size_t i = 0; i < n; ++i) z += std::exp(static_cast<long double>(x[r * n + i] - top));
    for (std::size_t i = 0; i < n; ++i)
      y[r * n + i] = static_cast<double>(std::exp(static_cast<long double>(x[r * n + i] - top)) / z);
  }
  return y;
}

Vec batchnorm(const Vec& x, const Vec& gamma, const Vec& beta, std::size_t batch,
              std::size_t channels, std::size_t plane, double eps) {
  Vec y(x.size());
  const double count = static_cast<double>(batch * plane);
  for (std::size_t c = 0; c < channels; ++c) {
    long double mean = 0.0L;
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t i = 0; i < plane; ++i) mean += x[(b * channels + c) * plane + i];
    mean /= count;
    long double var = 0.0L;
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t i = 0; i < plane; ++i) {
        const long double d = x[(b * channels + c) * plane + i] - mean;
        var += d * d;
      }
    var /= count;
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t i = 0; i < plane; ++i) {
        const std::size_t at = (b * channels + c) * plane + i;
        y[at] = static_cast<double>(gamma[c] * (x[at] - mean) / std::sqrt(var + eps) + beta[c]);
      }
  }
  return y;
}

Vec cumsum(const Vec& x, std::size_t a, std::size_t b, std::size_t c, std::size_t axis) {
  Vec y(x.size(), 0.0);
  for (std::size_t i = 0; i < a; ++i)
    for (std::size_t j = 0; j < b; ++j)
      for (std::size_t l = 0; l < c; ++l) {
        double s = 0.0;
        if (axis == 0) for (std::size_t t = 0; t <= i; ++t) s += x[(t * b + j) * c + l];
        if (axis == 1) for (std::size_t t = 0; t <= j; ++t) s += x[(i * b + t) * c + l];
        if (axis == 2) for (std::size_t t = 0; t <= l; ++t) s += x[(i * b + j) * c + t];
        y[(i * b + j) * c + l] = s;
      }
  return y;
}

Vec distances(const Vec& points, const Vec& centres, std::size_t n, std::size_t k, std::size_t d) {
  Vec out(n * k);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      long double s = 0.0L;
      for (std::size_t r = 0; r < d; ++r) {
        const long double diff = static_cast<long double>(points[i * d + r]) - centres[j * d + r];
        s += diff * diff;
      }
      out[i * k + j] = static_cast<double>(std::sqrt(s));
    }
  return out;
}

Vec attention(const Vec& m, const Vec& v, const Vec& wq, const Vec& wk, const Vec& wv,
              const Vec& w1, const Vec& w2, std::size_t batch, std::size_t tokens, std::size_t k,
              std::size_t heads, bool head_width_scaling) {
  const std::size_t dh = k / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_width_scaling ? dh : k));
  Vec out(batch * tokens * k, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    const Vec mb(m.begin() + static_cast<long>(b * tokens * k), m.begin() + static_cast<long>((b + 1) * tokens * k));
    const Vec vb(v.begin() + static_cast<long>(b * tokens * k), v.begin() + static_cast<long>((b + 1) * tokens * k));
    const Vec q = matmul(mb, wq, tokens, k, k);
    const Vec key = matmul(mb, wk, tokens, k, k);
    const Vec val = matmul(vb, wv, tokens, k, k);
    Vec merged(tokens * k, 0.0);
    for (std::size_t h = 0; h < heads; ++h) {
      Vec logits(tokens * tokens);
      for (std::size_t i = 0; i < tokens; ++i)
        for (std::size_t j = 0; j < tokens; ++j) {
          double s = 0.0;
          for (std::size_t r = 0; r < dh; ++r) s += q[i * k + h * dh + r] * key[j * k + h * dh + r];
          logits[i * tokens + j] = s * scale;
        }
      const Vec a = softmax_rows(logits, tokens, tokens);
      for (std::size_t i = 0; i < tokens; ++i)
        for (std::size_t r = 0; r < dh; ++r) {
          double s = 0.0;
          for (std::size_t j = 0; j < tokens; ++j) s += a[i * tokens + j] * val[j * k + h * dh + r];
          merged[i * k + h * dh + r] = s;
        }
    }
    const Vec y = matmul(matmul(merged, w1, tokens, k, k), w2, tokens, k, k);
    for (std::size_t i = 0; i < tokens * k; ++i) out[b * tokens * k + i] = y[i];
  }
  return out;
}

namespace {

double mean_ce(const Vec& logits, const std::vector<std::size_t>& labels, std::size_t n,
               std::size_t classes) {
  long double total = 0.0L;
  for (std::size_t i = 0; i < n; ++i) {
    double top = logits[i * classes];
    for (std::size_t c = 1; c < classes; ++c) top = std::max(top, logits[i * classes + c]);
    long double z = 0.0L;
    for (std::size_t c = 0; c < classes; ++c) z += std::exp(static_cast<long double>(logits[i * classes + c] - top));
    total += -(logits[i * classes + labels[i]] - top - std::log(z));
  }
  return static_cast<double>(total / static_cast<long double>(n));
}

}  // namespace

double classification_loss(const Vec& features, const Vec& classifier,
                           const std::vector<std::size_t>& labels, std::size_t n, std::size_t d,
                           std::size_t classes) {
  return mean_ce(matmul(features, classifier, n, d, classes), labels, n, classes);
}

double meta_loss(const Vec& support, const std::vector<std::size_t>& support_labels,
                 const Vec& query, const std::vector<std::size_t>& query_labels, std::size_t d,
                 std::size_t way, double temperature) {
  Vec protos(way * d, 0.0);
  std::vector<double> counts(way, 0.0);
  for (std::size_t i = 0; i < support_labels.size(); ++i) {
    counts[support_labels[i]] += 1.0;
    for (std::size_t r = 0; r < d; ++r) protos[support_labels[i] * d + r] += support[i * d + r];
  }
  for (std::size_t c = 0; c < way; ++c)
    for (std::size_t r = 0; r < d; ++r) protos[c * d + r] /= counts[c];
  const std::size_t nq = query_labels.size();
  Vec logits(nq * way);
  for (std::size_t i = 0; i < nq; ++i)
    for (std::size_t c = 0; c < way; ++c) {
      double dotp = 0.0, qq = 0.0, pp = 0.0;
      for (std::size_t r = 0; r < d; ++r) {
        dotp += query[i * d + r] * protos[c * d + r];
        qq += query[i * d + r] * query[i * d + r];
        pp += protos[c * d + r] * protos[c * d + r];
      }
      logits[i * way + c] = temperature * dotp / (std::sqrt(qq) * std::sqrt(pp));
    }
  return mean_ce(logits, query_labels, nq, way);
}

Vec kmeans(const Vec& points, Vec centres, std::size_t n, std::size_t k, std::size_t d,
           std::size_t iterations) {
  for (std::size_t it = 0; it < iterations; ++it) {
    Vec sums(k * d, 0.0);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < k; ++j) {
        double s = 0.0;
        for (std::size_t r = 0; r < d; ++r) s += (points[i * d + r] - centres[j * d + r]) * (points[i * d + r] - centres[j * d + r]);
        if (s < best_d) { best_d = s; best = j; }
      }
      ++counts[best];
      for (std::size_t r = 0; r < d; ++r) sums[best * d + r] += points[i * d + r];
    }
    for (std::size_t j = 0; j < k; ++j)
      if (counts[j] > 0)
        for (std::size_t r = 0; r < d; ++r) centres[j * d + r] = sums[j * d + r] / static_cast<double>(counts[j]);
  }
  return centres;
}

Vec fdc(const Vec& distances, std::size_t batch, std::size_t h, std::size_t w, std::size_t k,
        std::size_t n_terms, double amplitude) {
  Vec intensity(batch * h * w, 0.0);
  for (std::size_t i = 0; i < batch * h * w; ++i) {
    for (std::size_t c = 0; c < k; ++c) intensity[i] += distances[i * k + c];
    intensity[i] /= static_cast<double>(k);
  }
  const std::size_t q = k / 4;
  Vec out(batch * h * w * k);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        double ix = 0.0, iy = 0.0;
        for (std::size_t t = 0; t <= x; ++t) ix += intensity[(b * h + y) * w + t];
        for (std::size_t t = 0; t <= y; ++t) iy += intensity[(b * h + t) * w + x];
        double* cell = &out[((b * h + y) * w + x) * k];
        for (std::size_t n = 0; n < q && n < n_terms; ++n) {
          const double f = std::pow(10000.0, -2.0 * static_cast<double>(n / 2) / static_cast<double>(n_terms));
          cell[n] = std::sin(amplitude * ix * f);
          cell[q + n] = std::cos(amplitude * ix * f);
          cell[2 * q + n] = std::sin(amplitude * iy * f);
          cell[3 * q + n] = std::cos(amplitude * iy * f);
        }
      }
  return out;
}

double ci95(const Vec& values) {
  const double n = static_cast<double>(values.size());
  long double mean = 0.0L;
  for (double v : values) mean += v;
  mean /= n;
  long double var = 0.0L;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= n;
  return static_cast<double>(1.96L * std::sqrt(var) / std::sqrt(static_cast<long double>(n)));
}

double bray_curtis(const Vec& a, const Vec& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += std::fabs(a[i] - b[i]);
    den += std::fabs(a[i] + b[i]);
  }
  return den == 0.0 ? 0.0 : num / den;
}

Vec numeric_gradient(const std::function<double(const Vec&)>& f, const Vec& x, double step) {
  Vec g(x.size());
  Vec probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + step;
    const double up = f(probe);
    probe[i] = x[i] - step;
    const double down = f(probe);
    probe[i] = x[i];
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

double max_abs_diff(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = std::fabs(a[i] - b[i]);
    if (!(d <= worst)) worst = d;  // NaN propagates as a failure
  }
  return worst;
}

Verdict check(const std::string& name, const Vec& expected, const Vec& candidate, double tolerance) {
  static const std::set<std::string> known{"matmul", "conv2d", "maxpool2d", "softmax", "batchnorm",
                                           "cumulative_sum", "cluster_distances", "multihead_attention",
                                           "classification_loss", "meta_loss", "kmeans", "ci95"};
  if (!known.count(name)) throw std::invalid_argument("no oracle named '" + name + "'");
  Verdict v;
  v.deviation = max_abs_diff(expected, candidate);
  v.pass = v.deviation <= tolerance;
  return v;
}

}  // namespace oracle
