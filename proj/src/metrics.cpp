#include "dscl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "dscl/layers.hpp"

namespace dscl {

namespace {

void map_dims(const Tensor<double>& m, int& h, int& w, const char* who) {
  if (m.rank() == 2) {
    h = m.dim(0);
    w = m.dim(1);
  } else if (m.rank() == 3 && m.dim(2) == 1) {
    h = m.dim(0);
    w = m.dim(1);
  } else {
    throw DimError(std::string(who) + ": H x W (x1) map required");
  }
}

struct Moments {
  double mean, stddev;  // population
};

Moments moments(const Tensor<double>& m) {
  double mean = 0;
  for (size_t i = 0; i < m.size(); ++i) mean += m[i];
  mean /= double(m.size());
  double var = 0;
  for (size_t i = 0; i < m.size(); ++i) {
    const double d = m[i] - mean;
    var += d * d;
  }
  var /= double(m.size());
  return {mean, std::sqrt(var)};
}

// min-max normalization; a constant map maps to all zeros
std::vector<double> minmax_normalize(const Tensor<double>& m) {
  double lo = m[0], hi = m[0];
  for (size_t i = 1; i < m.size(); ++i) {
    lo = std::min(lo, m[i]);
    hi = std::max(hi, m[i]);
  }
  std::vector<double> v(m.size());
  // division keeps the maximum at exactly 1.0, so the sentinel threshold
  // at 1 classifies the top pixel consistently
  if (hi > lo)
    for (size_t i = 0; i < m.size(); ++i) v[i] = (m[i] - lo) / (hi - lo);
  return v;
}

// Judd-style ROC area over value sets in [0,1]; thresholds are the distinct
// positive values plus sentinels 0 and 1; classification is value >= thresh;
// the (0,0) endpoint is explicit.
double roc_auc(std::vector<double> pos, std::vector<double> neg) {
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());
  std::vector<double> thresholds = pos;
  thresholds.push_back(0.0);
  thresholds.push_back(1.0);
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                   thresholds.end());

  const double np = double(pos.size()), nn = double(neg.size());
  std::vector<std::pair<double, double>> pts;  // (fpr, tpr)
  pts.emplace_back(0.0, 0.0);
  for (auto it = thresholds.rbegin(); it != thresholds.rend(); ++it) {
    const double t = *it;
    const double tp =
        double(pos.end() - std::lower_bound(pos.begin(), pos.end(), t));
    const double fp =
        double(neg.end() - std::lower_bound(neg.begin(), neg.end(), t));
    pts.emplace_back(fp / nn, tp / np);
  }
  std::sort(pts.begin(), pts.end());
  double area = 0;
  for (size_t i = 1; i < pts.size(); ++i)
    area += (pts[i].first - pts[i - 1].first) *
            (pts[i].second + pts[i - 1].second) * 0.5;
  return area;
}

}  // namespace

FixationMap FixationMap::from_points(int rows, int cols,
                                     std::vector<std::pair<int, int>> pts) {
  if (rows <= 0 || cols <= 0) throw DimError("fixations: bad grid dims");
  for (const auto& [r, c] : pts)
    if (r < 0 || r >= rows || c < 0 || c >= cols)
      throw DataError("fixations: point (" + std::to_string(r) + "," +
                      std::to_string(c) + ") out of bounds");
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  FixationMap f;
  f.rows = rows;
  f.cols = cols;
  f.points = std::move(pts);
  return f;
}

FixationMap FixationMap::from_grid(const Tensor<double>& grid, double thresh) {
  int h, w;
  map_dims(grid, h, w, "fixations");
  std::vector<std::pair<int, int>> pts;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      if (grid[size_t(r) * w + c] > thresh) pts.emplace_back(r, c);
  return from_points(h, w, std::move(pts));
}

Tensor<double> FixationMap::to_grid() const {
  Tensor<double> g({rows, cols, 1});
  for (const auto& [r, c] : points) g[size_t(r) * cols + c] = 1.0;
  return g;
}

bool FixationMap::contains(int r, int c) const {
  return std::binary_search(points.begin(), points.end(), std::make_pair(r, c));
}

double default_density_sigma(int rows, int cols) {
  return 0.035 * double(std::min(rows, cols));
}

double nss(const Tensor<double>& sal, const FixationMap& fix) {
  int h, w;
  map_dims(sal, h, w, "nss");
  if (h != fix.rows || w != fix.cols)
    throw DimError("nss: saliency/fixation grid mismatch");
  if (fix.points.empty()) throw DataError("nss: empty fixation set");
  const Moments m = moments(sal);
  if (m.stddev < 1e-12)
    throw NumericError("nss: constant saliency map has undefined NSS");
  double acc = 0;
  for (const auto& [r, c] : fix.points)
    acc += (sal[size_t(r) * w + c] - m.mean) / m.stddev;
  return acc / double(fix.points.size());
}

double cc(const Tensor<double>& sal, const Tensor<double>& density) {
  int h, w, h2, w2;
  map_dims(sal, h, w, "cc");
  map_dims(density, h2, w2, "cc");
  if (h != h2 || w != w2) throw DimError("cc: map dims mismatch");
  const Moments ms = moments(sal), md = moments(density);
  if (ms.stddev < 1e-12 || md.stddev < 1e-12)
    throw NumericError("cc: constant map has undefined correlation");
  double cov = 0;
  for (size_t i = 0; i < sal.size(); ++i)
    cov += (sal[i] - ms.mean) * (density[i] - md.mean);
  cov /= double(sal.size());
  return cov / (ms.stddev * md.stddev);
}

Tensor<double> fixation_density(const FixationMap& fix, double sigma) {
  if (fix.points.empty()) throw DataError("fixation_density: empty fixation set");
  Tensor<double> blurred =
      gaussian_blur(fix.to_grid(), sigma, gaussian_kernel_size(sigma));
  double mx = 0;
  for (size_t i = 0; i < blurred.size(); ++i) mx = std::max(mx, blurred[i]);
  for (size_t i = 0; i < blurred.size(); ++i) blurred[i] /= mx;
  return blurred;
}

double auc_judd(const Tensor<double>& sal, const FixationMap& fix) {
  int h, w;
  map_dims(sal, h, w, "auc_judd");
  if (h != fix.rows || w != fix.cols)
    throw DimError("auc_judd: saliency/fixation grid mismatch");
  if (fix.points.empty()) throw DataError("auc_judd: empty fixation set");
  if (fix.count() == h * w) throw DataError("auc_judd: all pixels fixated");
  const auto norm = minmax_normalize(sal);
  std::vector<double> pos, neg;
  pos.reserve(fix.points.size());
  neg.reserve(norm.size() - fix.points.size());
  size_t pi = 0;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const bool fixated = pi < fix.points.size() &&
                           fix.points[pi] == std::make_pair(r, c);
      if (fixated) {
        pos.push_back(norm[size_t(r) * w + c]);
        ++pi;
      } else {
        neg.push_back(norm[size_t(r) * w + c]);
      }
    }
  return roc_auc(std::move(pos), std::move(neg));
}

double auc_with_negatives(const Tensor<double>& sal, const FixationMap& fix,
                          const std::vector<std::pair<int, int>>& negatives) {
  int h, w;
  map_dims(sal, h, w, "auc_with_negatives");
  if (h != fix.rows || w != fix.cols)
    throw DimError("auc_with_negatives: saliency/fixation grid mismatch");
  if (fix.points.empty()) throw DataError("auc: empty fixation set");
  if (negatives.empty()) throw DataError("auc: empty negative set");
  const auto norm = minmax_normalize(sal);
  std::vector<double> pos, neg;
  for (const auto& [r, c] : fix.points) pos.push_back(norm[size_t(r) * w + c]);
  for (const auto& [r, c] : negatives) {
    if (r < 0 || r >= h || c < 0 || c >= w)
      throw DataError("auc: negative point out of bounds");
    neg.push_back(norm[size_t(r) * w + c]);
  }
  return roc_auc(std::move(pos), std::move(neg));
}

std::vector<std::pair<int, int>> sauc_negative_pool(
    const FixationMap& fix, const std::vector<FixationMap>& others) {
  std::vector<std::pair<int, int>> pool;
  for (const auto& o : others)
    for (const auto& p : o.points)
      if (!fix.contains(p.first, p.second)) pool.push_back(p);
  return pool;
}

std::vector<int> sauc_sample_indices(int pool_size, int n, uint64_t seed,
                                     int split) {
  Rng rng(mix_seed(seed, uint64_t(split)));
  std::vector<int> idx(size_t(pool_size), 0);
  for (int i = 0; i < pool_size; ++i) idx[size_t(i)] = i;
  for (int i = 0; i < n; ++i) {
    const int j = rng.uniform_int(i, pool_size - 1);
    std::swap(idx[size_t(i)], idx[size_t(j)]);
  }
  idx.resize(size_t(n));
  return idx;
}

double sauc(const Tensor<double>& sal, const FixationMap& fix,
            const std::vector<FixationMap>& others, int splits, uint64_t seed) {
  if (splits < 1) throw ConfigError("sauc: splits must be >= 1");
  const auto pool = sauc_negative_pool(fix, others);
  const int n = fix.count();
  if (int(pool.size()) < n)
    throw DataError("sauc: insufficient negatives after excluding positives");
  double acc = 0;
  for (int k = 0; k < splits; ++k) {
    const auto idx = sauc_sample_indices(int(pool.size()), n, seed, k);
    std::vector<std::pair<int, int>> negs;
    negs.reserve(idx.size());
    for (int i : idx) negs.push_back(pool[size_t(i)]);
    acc += auc_with_negatives(sal, fix, negs);
  }
  return acc / double(splits);
}

std::vector<std::pair<int, int>> load_fixation_points_csv(
    const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("fixations: cannot open " + path);
  std::vector<std::pair<int, int>> pts;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw DataError("fixations: malformed line " + std::to_string(lineno) +
                      " in " + path);
    try {
      const int r = std::stoi(line.substr(0, comma));
      const int c = std::stoi(line.substr(comma + 1));
      pts.emplace_back(r, c);
    } catch (const std::exception&) {
      throw DataError("fixations: malformed line " + std::to_string(lineno) +
                      " in " + path);
    }
  }
  return pts;
}

FixationMap load_fixations_csv(const std::string& path, int rows, int cols) {
  return FixationMap::from_points(rows, cols, load_fixation_points_csv(path));
}

void save_fixations_csv(const std::string& path, const FixationMap& fix) {
  std::ofstream os(path);
  if (!os) throw DataError("fixations: cannot open " + path);
  for (const auto& [r, c] : fix.points) os << r << "," << c << "\n";
  if (!os) throw DataError("fixations: write failed for " + path);
}

}  // namespace dscl
