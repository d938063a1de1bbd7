#include "fedeec/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fedeec::datagen {

namespace {

constexpr double kSigmaDecay = 0.35;

// Orthonormalize a seeded Gaussian matrix; fix signs so the result is a
// deterministic function of the stream.
Matrix random_rotation(int d, RngStream& stream) {
  Matrix g(d, d);
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < d; ++c) g(r, c) = stream.normal();
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  Matrix rmat = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int c = 0; c < d; ++c)
    if (rmat(c, c) < 0) q.col(c) = -q.col(c);
  return q;
}

// C unit directions inside the span of the first few (highest-variance)
// latent coordinates, resampled for spread.
Matrix class_directions(int class_count, int input_dim, RngStream& stream) {
  const int span = std::min(3, input_dim);
  Matrix best = Matrix::Zero(class_count, input_dim);
  double best_min_dist = -1.0;
  for (int attempt = 0; attempt < 64; ++attempt) {
    Matrix dirs = Matrix::Zero(class_count, input_dim);
    for (int c = 0; c < class_count; ++c) {
      Vector u = Vector::Zero(input_dim);
      double norm2 = 0.0;
      do {
        for (int j = 0; j < span; ++j) u[j] = stream.normal();
        norm2 = u.squaredNorm();
      } while (norm2 < 1e-12);
      dirs.row(c) = u.transpose() / std::sqrt(norm2);
    }
    double min_dist = std::numeric_limits<double>::infinity();
    for (int a = 0; a < class_count; ++a)
      for (int b = a + 1; b < class_count; ++b)
        min_dist = std::min(min_dist, (dirs.row(a) - dirs.row(b)).norm());
    if (class_count == 1) min_dist = 1.0;
    if (min_dist > best_min_dist) {
      best_min_dist = min_dist;
      best = dirs;
    }
  }
  return best;
}

}  // namespace

GaussianMixture GaussianMixture::create(int class_count, int input_dim, double class_sep,
                                        std::uint64_t seed) {
  if (class_count < 2) throw Error("datagen", "need at least 2 classes");
  if (input_dim < 1) throw Error("datagen", "need at least 1 input dim");

  GaussianMixture m;
  m.class_count_ = class_count;
  m.input_dim_ = input_dim;
  m.class_sep_ = class_sep;

  RngStream space = derive_stream(seed, "datagen-space");
  m.rotation_ = random_rotation(input_dim, space);
  m.latent_sigma = Vector(input_dim);
  for (int j = 0; j < input_dim; ++j) m.latent_sigma[j] = std::pow(kSigmaDecay, j);
  m.class_means_ = class_sep * class_directions(class_count, input_dim, space);

  // Exact moments of the generating mixture, per observed dimension:
  //   mean = R * mean_c(mu_c)
  //   E[x^2] = mean_c[ (R mu_c)_i^2 ] + (R diag(sigma^2) R^T)_ii
  Vector mu_bar = m.class_means_.colwise().mean().transpose();
  Vector mean_obs = m.rotation_ * mu_bar;
  Vector second(input_dim);
  Matrix rot_means = m.class_means_ * m.rotation_.transpose();  // C x d, rows = R*mu_c
  Vector sigma2 = m.latent_sigma.array().square();
  for (int i = 0; i < input_dim; ++i) {
    double s = 0.0;
    for (int c = 0; c < class_count; ++c) s += rot_means(c, i) * rot_means(c, i);
    s /= class_count;
    double within = (m.rotation_.row(i).transpose().array().square() * sigma2.array()).sum();
    second[i] = s + within;
  }
  m.shift_ = mean_obs;
  m.scale_ = (second.array() - mean_obs.array().square()).sqrt().max(1e-9);
  return m;
}

Vector GaussianMixture::draw_one(int label, RngStream& stream) const {
  Vector latent(input_dim_);
  for (int j = 0; j < input_dim_; ++j) latent[j] = latent_sigma[j] * stream.normal();
  latent += class_means_.row(label).transpose();
  Vector x = rotation_ * latent;
  return (x - shift_).array() / scale_.array();
}

LabeledDataset GaussianMixture::sample(int n, std::uint64_t sample_seed) const {
  if (n < class_count_) throw Error("datagen", "n must be >= class count");
  LabeledDataset ds;
  ds.class_count = class_count_;
  ds.seed = sample_seed;
  ds.inputs = Matrix(n, input_dim_);
  ds.labels = IntVector(n);

  // balanced labels (+-1), then a seeded shuffle of the order
  std::vector<int> labels;
  labels.reserve(n);
  for (int i = 0; i < n; ++i) labels.push_back(i % class_count_);
  RngStream stream = derive_stream(sample_seed, "datagen-sample");
  stream.shuffle(labels);
  for (int i = 0; i < n; ++i) {
    ds.labels[i] = labels[i];
    ds.inputs.row(i) = draw_one(labels[i], stream).transpose();
  }
  return ds;
}

Matrix GaussianMixture::sample_inputs(int n, std::uint64_t sample_seed) const {
  LabeledDataset ds = sample(std::max(n, class_count_), sample_seed);
  return ds.inputs.topRows(n);
}

LabeledDataset make_dataset(int n, int class_count, int input_dim, double class_sep,
                            std::uint64_t seed) {
  if (n < class_count) throw Error("datagen", "n must be >= class count");
  GaussianMixture space = GaussianMixture::create(class_count, input_dim, class_sep, seed);
  return space.sample(n, fnv1a_u64(seed, fnv1a("samples")));
}

PartitionPlan dirichlet_partition(const LabeledDataset& ds, int clients, double alpha,
                                  std::uint64_t seed) {
  if (clients < 1) throw Error("datagen", "need at least 1 client");
  if (alpha <= 0.0) throw Error("datagen", "alpha must be positive");
  if (clients > ds.size())
    throw Error("datagen", "more clients than samples");

  const int C = ds.class_count;
  std::vector<std::vector<int>> per_class(C);
  for (int i = 0; i < ds.size(); ++i) per_class[ds.labels[i]].push_back(i);

  RngStream stream = derive_stream(seed, "dirichlet-partition");
  for (int attempt = 0; attempt < 100; ++attempt) {
    std::vector<std::vector<int>> assign(clients);
    for (int c = 0; c < C; ++c) {
      std::vector<int> idx = per_class[c];
      stream.shuffle(idx);
      const int nc = static_cast<int>(idx.size());
      std::vector<double> w = stream.dirichlet_symmetric(alpha, clients);
      // largest-remainder rounding keeps the split exact
      std::vector<int> counts(clients);
      std::vector<std::pair<double, int>> rema(clients);
      int assigned = 0;
      for (int k = 0; k < clients; ++k) {
        const double exact = w[k] * nc;
        counts[k] = static_cast<int>(std::floor(exact));
        rema[k] = {exact - counts[k], k};
        assigned += counts[k];
      }
      std::sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
      });
      for (int r = 0; r < nc - assigned; ++r) counts[rema[r].second]++;
      int pos = 0;
      for (int k = 0; k < clients; ++k)
        for (int j = 0; j < counts[k]; ++j) assign[k].push_back(idx[pos++]);
    }
    const bool any_empty = std::any_of(assign.begin(), assign.end(),
                                       [](const auto& v) { return v.empty(); });
    if (!any_empty) {
      for (auto& v : assign) std::sort(v.begin(), v.end());
      PartitionPlan plan;
      plan.client_indices = std::move(assign);
      plan.alpha = alpha;
      plan.seed = seed;
      return plan;
    }
  }
  throw Error("datagen", "could not give every client a sample in 100 draws");
}

Vector class_histogram(const IntVector& labels, const std::vector<int>& indices,
                       int class_count) {
  Vector h = Vector::Zero(class_count);
  for (int i : indices) h[labels[i]] += 1.0;
  if (!indices.empty()) h /= static_cast<double>(indices.size());
  return h;
}

Vector class_histogram_all(const IntVector& labels, int class_count) {
  std::vector<int> all(labels.size());
  std::iota(all.begin(), all.end(), 0);
  return class_histogram(labels, all, class_count);
}

double total_variation(const Vector& a, const Vector& b) {
  return 0.5 * (a - b).cwiseAbs().sum();
}

}  // namespace fedeec::datagen
