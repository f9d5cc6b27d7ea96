#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

// Brute-force references for the test tier. Everything here is written from
// the definitions with scalar loops over std::vector and deliberately shares
// no code with the library.
namespace oracle {

using Vec = std::vector<double>;

// [m x p] . [p x q]
Vec matmul(const Vec& a, const Vec& b, std::size_t m, std::size_t p, std::size_t q);

// "Same" zero-padded cross-correlation, NCHW input, [O x C x ks x ks] kernel.
Vec conv2d(const Vec& x, const Vec& w, std::size_t batch, std::size_t channels, std::size_t h,
           std::size_t wd, std::size_t out, std::size_t ks);

// 2x2 stride-2 max pool over [planes x h x w].
Vec maxpool(const Vec& x, std::size_t planes, std::size_t h, std::size_t w);

// Softmax over the last axis of [rows x n].
Vec softmax_rows(const Vec& x, std::size_t rows, std::size_t n);

// Training-mode batch norm over (B, H, W) per channel, NCHW.
Vec batchnorm(const Vec& x, const Vec& gamma, const Vec& beta, std::size_t batch,
              std::size_t channels, std::size_t plane, double eps);

// Prefix sums along `axis` of a 3-D block [a x b x c].
Vec cumsum(const Vec& x, std::size_t a, std::size_t b, std::size_t c, std::size_t axis);

// Euclidean distance of each of n points to each of k centres, both width d.
Vec distances(const Vec& points, const Vec& centres, std::size_t n, std::size_t k, std::size_t d);

// Multi-head attention with queries = keys = m and values = v, both [B x T x k];
// weights [k x k] applied as x . W. Heads split the k columns evenly.
Vec attention(const Vec& m, const Vec& v, const Vec& wq, const Vec& wk, const Vec& wv,
              const Vec& w1, const Vec& w2, std::size_t batch, std::size_t tokens, std::size_t k,
              std::size_t heads, bool head_width_scaling);

// Mean cross-entropy of softmax(features . classifier) against labels.
double classification_loss(const Vec& features, const Vec& classifier,
                           const std::vector<std::size_t>& labels, std::size_t n, std::size_t d,
                           std::size_t classes);

// Cosine-to-prototype loss: prototypes are class means of the support rows,
// logits are temperature * cosine, loss is mean cross-entropy.
double meta_loss(const Vec& support, const std::vector<std::size_t>& support_labels,
                 const Vec& query, const std::vector<std::size_t>& query_labels, std::size_t d,
                 std::size_t way, double temperature);

// Lloyd's algorithm from given initial centres; returns final centres.
Vec kmeans(const Vec& points, Vec centres, std::size_t n, std::size_t k, std::size_t d,
           std::size_t iterations);

// Frequency distance encoding of a [B x H x W x k] distance map written out
// cell by cell: mean over k, running sums along width and height, the first
// k/4 sines and k/4 cosines of A * running_sum * 10000^(-2 (n div 2) / N) per
// axis, x half before y half.
Vec fdc(const Vec& distances, std::size_t batch, std::size_t h, std::size_t w, std::size_t k,
        std::size_t n_terms, double amplitude);

// 1.96 * population standard deviation / sqrt(n).
double ci95(const Vec& values);

// sum |a - b| / sum |a + b|, 0 when the denominator vanishes.
double bray_curtis(const Vec& a, const Vec& b);

// Central-difference gradient of f at x.
Vec numeric_gradient(const std::function<double(const Vec&)>& f, const Vec& x, double step);

// Largest |a - b| over matching entries; infinity on a size mismatch.
double max_abs_diff(const Vec& a, const Vec& b);

struct Verdict {
  bool pass = false;
  double deviation = 0.0;
};

// Runs a named oracle against a candidate's output. Unknown names throw
// std::invalid_argument (a test-configuration error).
Verdict check(const std::string& name, const Vec& expected, const Vec& candidate, double tolerance);

}  // namespace oracle
