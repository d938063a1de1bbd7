#include "fedeec/nn.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace fedeec::nn {

namespace {

void check_dims(const std::vector<int>& dims) {
  if (dims.size() < 2) throw std::invalid_argument("DenseModel: need at least input and output dims");
  for (int d : dims)
    if (d <= 0) throw std::invalid_argument("DenseModel: non-positive layer dim");
}

}  // namespace

long DenseModel::param_count() const {
  long n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l)
    n += weights[l].size() + biases[l].size();
  return n;
}

Gradients& Gradients::operator+=(const Gradients& other) {
  for (std::size_t l = 0; l < d_weights.size(); ++l) {
    d_weights[l] += other.d_weights[l];
    d_biases[l] += other.d_biases[l];
  }
  return *this;
}

Gradients& Gradients::operator*=(double s) {
  for (std::size_t l = 0; l < d_weights.size(); ++l) {
    d_weights[l] *= s;
    d_biases[l] *= s;
  }
  return *this;
}

Gradients zeros_like(const DenseModel& model) {
  Gradients g;
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    g.d_weights.push_back(Matrix::Zero(model.weights[l].rows(), model.weights[l].cols()));
    g.d_biases.push_back(Vector::Zero(model.biases[l].size()));
  }
  return g;
}

DenseModel init_dense(const std::vector<int>& layer_dims, RngStream& stream) {
  check_dims(layer_dims);
  DenseModel m;
  m.layer_dims = layer_dims;
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    const int in = layer_dims[l];
    const int out = layer_dims[l + 1];
    Matrix w(out, in);
    const double scale = std::sqrt(2.0 / in);
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c) w(r, c) = scale * stream.normal();
    m.weights.push_back(std::move(w));
    m.biases.push_back(Vector::Zero(out));
  }
  return m;
}

Matrix forward(const DenseModel& model, const Matrix& inputs) {
  if (inputs.cols() != model.input_dim())
    throw std::invalid_argument("forward: input width " + std::to_string(inputs.cols()) +
                                " != model input dim " + std::to_string(model.input_dim()));
  Matrix a = inputs;
  const std::size_t last = model.weights.size() - 1;
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    Matrix z = a * model.weights[l].transpose();
    z.rowwise() += model.biases[l].transpose();
    if (l < last)
      a = z.cwiseMax(0.0);
    else
      a = std::move(z);
  }
  return a;
}

ForwardTrace forward_trace(const DenseModel& model, const Matrix& inputs) {
  if (inputs.cols() != model.input_dim())
    throw std::invalid_argument("forward_trace: input width mismatch");
  ForwardTrace t;
  t.activations.push_back(inputs);
  const std::size_t last = model.weights.size() - 1;
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    Matrix z = t.activations.back() * model.weights[l].transpose();
    z.rowwise() += model.biases[l].transpose();
    t.preacts.push_back(z);
    if (l < last)
      t.activations.push_back(z.cwiseMax(0.0));
    else
      t.activations.push_back(std::move(z));
  }
  return t;
}

BackwardResult backward(const DenseModel& model, const ForwardTrace& trace,
                        const Matrix& d_logits) {
  const std::size_t layers = model.weights.size();
  if (trace.preacts.size() != layers)
    throw std::invalid_argument("backward: trace does not match model depth");
  if (d_logits.rows() != trace.logits().rows() || d_logits.cols() != trace.logits().cols())
    throw std::invalid_argument("backward: upstream gradient shape mismatch");

  BackwardResult out;
  out.grads.d_weights.resize(layers);
  out.grads.d_biases.resize(layers);

  Matrix delta = d_logits;  // gradient w.r.t. preact of current layer
  for (std::size_t l = layers; l-- > 0;) {
    out.grads.d_weights[l] = delta.transpose() * trace.activations[l];
    out.grads.d_biases[l] = delta.colwise().sum().transpose();
    Matrix d_act = delta * model.weights[l];
    if (l > 0) {
      // rectifier mask: derivative 0 at z <= 0
      delta = (trace.preacts[l - 1].array() > 0.0).cast<double>() * d_act.array();
    } else {
      out.d_inputs = std::move(d_act);
    }
  }
  return out;
}

void sgd_step(DenseModel& model, const Gradients& grads, double lr) {
  if (grads.d_weights.size() != model.weights.size())
    throw std::invalid_argument("sgd_step: gradient layer count mismatch");
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    if (grads.d_weights[l].rows() != model.weights[l].rows() ||
        grads.d_weights[l].cols() != model.weights[l].cols() ||
        grads.d_biases[l].size() != model.biases[l].size())
      throw std::invalid_argument("sgd_step: gradient shape mismatch at layer " + std::to_string(l));
    model.weights[l] -= lr * grads.d_weights[l];
    model.biases[l] -= lr * grads.d_biases[l];
  }
}

ProbVector softmax_temp(const Vector& logits, double temperature) {
  if (temperature <= 0.0) throw std::invalid_argument("softmax_temp: temperature must be > 0");
  if (!logits.allFinite()) throw std::invalid_argument("softmax_temp: non-finite logits");
  Vector scaled = logits / temperature;
  const double m = scaled.maxCoeff();
  Vector e = (scaled.array() - m).exp();
  return ProbVector(e / e.sum());
}

Matrix softmax_rows(const Matrix& logits, double temperature) {
  if (temperature <= 0.0) throw std::invalid_argument("softmax_rows: temperature must be > 0");
  Matrix scaled = logits / temperature;
  Vector row_max = scaled.rowwise().maxCoeff();
  Matrix e = (scaled.colwise() - row_max).array().exp();
  Vector sums = e.rowwise().sum();
  return e.array().colwise() / sums.array();
}

double cross_entropy(const ProbVector& probs, int label) {
  if (label < 0 || label >= probs.size())
    throw std::invalid_argument("cross_entropy: label out of range");
  return -std::log(std::max(probs[label], kProbFloor));
}

double kl_div(const ProbVector& p, const ProbVector& q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl_div: length mismatch");
  return kl_div_rows(p.values().transpose(), q.values().transpose());
}

double kl_div_rows(const Eigen::Ref<const Eigen::RowVectorXd>& p,
                   const Eigen::Ref<const Eigen::RowVectorXd>& q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl_div_rows: length mismatch");
  double kl = 0.0;
  for (Index i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;  // 0 log 0 := 0
    kl += p[i] * std::log(p[i] / std::max(q[i], kProbFloor));
  }
  return kl;
}

double train_epoch_ce(DenseModel& model, const Matrix& inputs, const IntVector& labels,
                      int batch_size, double lr, RngStream& stream) {
  if (inputs.rows() != labels.size()) throw std::invalid_argument("train_epoch_ce: row mismatch");
  const int n = static_cast<int>(inputs.rows());
  if (n == 0) return 0.0;
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  stream.shuffle(order);

  double loss_sum = 0.0;
  int steps = 0;
  for (int start = 0; start < n; start += batch_size) {
    const int bs = std::min(batch_size, n - start);
    Matrix bx(bs, inputs.cols());
    IntVector by(bs);
    for (int i = 0; i < bs; ++i) {
      bx.row(i) = inputs.row(order[start + i]);
      by[i] = labels[order[start + i]];
    }
    ForwardTrace trace = forward_trace(model, bx);
    Matrix probs = softmax_rows(trace.logits(), 1.0);
    double loss = 0.0;
    for (int i = 0; i < bs; ++i) {
      loss += -std::log(std::max(probs(i, by[i]), kProbFloor));
      probs(i, by[i]) -= 1.0;
    }
    probs /= static_cast<double>(bs);
    sgd_step(model, backward(model, trace, probs).grads, lr);
    loss_sum += loss / bs;
    ++steps;
  }
  return loss_sum / steps;
}

std::uint64_t weight_checksum(const DenseModel& model) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](double v) {
    std::uint64_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, sizeof(bits));
    h = fnv1a_u64(bits, h);
  };
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    const Matrix& w = model.weights[l];
    for (Index r = 0; r < w.rows(); ++r)
      for (Index c = 0; c < w.cols(); ++c) mix(w(r, c));
    for (Index i = 0; i < model.biases[l].size(); ++i) mix(model.biases[l][i]);
  }
  return h;
}

namespace {

void write_value(std::ostream& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out << buf;
}

}  // namespace

void save_dense(std::ostream& out, const DenseModel& model) {
  for (std::size_t i = 0; i < model.layer_dims.size(); ++i) {
    if (i) out << ' ';
    out << model.layer_dims[i];
  }
  out << '\n';
  bool first = true;
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    const Matrix& w = model.weights[l];
    for (Index r = 0; r < w.rows(); ++r)
      for (Index c = 0; c < w.cols(); ++c) {
        if (!first) out << ' ';
        write_value(out, w(r, c));
        first = false;
      }
    for (Index i = 0; i < model.biases[l].size(); ++i) {
      if (!first) out << ' ';
      write_value(out, model.biases[l][i]);
      first = false;
    }
  }
  out << '\n';
}

DenseModel load_dense(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw Error("model-io", "missing layer-dims header");
  std::istringstream hs(header);
  std::vector<int> dims;
  int d;
  while (hs >> d) dims.push_back(d);
  check_dims(dims);

  DenseModel m;
  m.layer_dims = dims;
  std::string params;
  if (!std::getline(in, params)) throw Error("model-io", "missing parameter line");
  std::istringstream ps(params);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    Matrix w(dims[l + 1], dims[l]);
    for (Index r = 0; r < w.rows(); ++r)
      for (Index c = 0; c < w.cols(); ++c)
        if (!(ps >> w(r, c))) throw Error("model-io", "truncated parameter line");
    Vector b(dims[l + 1]);
    for (Index i = 0; i < b.size(); ++i)
      if (!(ps >> b[i])) throw Error("model-io", "truncated parameter line");
    m.weights.push_back(std::move(w));
    m.biases.push_back(std::move(b));
  }
  double extra;
  if (ps >> extra) throw Error("model-io", "trailing parameters beyond declared dims");
  return m;
}

void save_dense_file(const std::string& path, const DenseModel& model) {
  std::ofstream out(path);
  if (!out) throw Error("model-io", "cannot open " + path + " for writing");
  save_dense(out, model);
}

DenseModel load_dense_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("model-io", "cannot open " + path);
  return load_dense(in);
}

}  // namespace fedeec::nn
