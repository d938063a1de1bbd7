#include "fedeec/autocodec.hpp"

#include <fstream>
#include <numeric>
#include <sstream>

#include "fedeec/rng.hpp"

namespace fedeec::autocodec {

namespace {

std::uint64_t config_fingerprint(const PretrainConfig& cfg, std::uint64_t seed) {
  std::ostringstream os;
  os << cfg.input_dim << '|' << cfg.embed_dim << '|' << cfg.hidden_dim << '|' << cfg.epochs
     << '|' << cfg.lr << '|' << cfg.batch_size << '|' << cfg.mse_max << '|'
     << cfg.holdout_fraction;
  return fnv1a_u64(seed, fnv1a(os.str()));
}

}  // namespace

AutoEncoder pretrain(const Matrix& corpus, const PretrainConfig& cfg, std::uint64_t seed) {
  if (corpus.rows() < 4) throw Error("autocodec-pretrain", "corpus too small");
  if (corpus.cols() != cfg.input_dim)
    throw Error("autocodec-pretrain", "corpus width does not match input_dim");
  if (cfg.epochs < 0) throw Error("autocodec-pretrain", "negative epoch count");

  AutoEncoder ae;
  ae.embed_dim = cfg.embed_dim;
  RngStream init = derive_stream(seed, "autocodec", 0, "init");
  ae.encoder = nn::init_dense({cfg.input_dim, cfg.hidden_dim, cfg.embed_dim}, init);
  ae.decoder = nn::init_dense({cfg.embed_dim, cfg.hidden_dim, cfg.input_dim}, init);
  ae.pretrain_fingerprint = config_fingerprint(cfg, seed);

  const int n = static_cast<int>(corpus.rows());
  const int holdout = std::max(1, static_cast<int>(n * cfg.holdout_fraction));
  const int train_n = n - holdout;
  if (train_n < 1) throw Error("autocodec-pretrain", "holdout leaves no training rows");
  const Matrix train = corpus.topRows(train_n);
  const Matrix held = corpus.bottomRows(holdout);

  std::vector<int> order(train_n);
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    RngStream shuffle_stream = derive_stream(seed, "autocodec", epoch, "shuffle");
    shuffle_stream.shuffle(order);
    for (int start = 0; start < train_n; start += cfg.batch_size) {
      const int bs = std::min(cfg.batch_size, train_n - start);
      Matrix batch(bs, cfg.input_dim);
      for (int i = 0; i < bs; ++i) batch.row(i) = train.row(order[start + i]);

      nn::ForwardTrace enc_t = nn::forward_trace(ae.encoder, batch);
      nn::ForwardTrace dec_t = nn::forward_trace(ae.decoder, enc_t.logits());
      // loss = mean over batch and dims of squared reconstruction error
      const double scale = 2.0 / (static_cast<double>(bs) * cfg.input_dim);
      Matrix d_recon = scale * (dec_t.logits() - batch);
      nn::BackwardResult dec_b = nn::backward(ae.decoder, dec_t, d_recon);
      nn::BackwardResult enc_b = nn::backward(ae.encoder, enc_t, dec_b.d_inputs);
      nn::sgd_step(ae.decoder, dec_b.grads, cfg.lr);
      nn::sgd_step(ae.encoder, enc_b.grads, cfg.lr);
    }
  }

  if (cfg.epochs > 0) {
    const double mse = reconstruction_mse(ae, held);
    if (mse > cfg.mse_max) throw PretrainError(mse, cfg.mse_max);
  }
  return ae;
}

double reconstruction_mse(const AutoEncoder& ae, const Matrix& samples) {
  const Matrix recon = decode_batch(ae, encode_batch(ae, samples));
  return (recon - samples).array().square().mean();
}

Vector encode(const AutoEncoder& ae, const Vector& x) {
  return nn::forward(ae.encoder, x.transpose()).row(0).transpose();
}

Matrix encode_batch(const AutoEncoder& ae, const Matrix& x) {
  return nn::forward(ae.encoder, x);
}

Vector decode(const AutoEncoder& ae, const Vector& embedding) {
  return nn::forward(ae.decoder, embedding.transpose()).row(0).transpose();
}

Matrix decode_batch(const AutoEncoder& ae, const Matrix& embeddings) {
  return nn::forward(ae.decoder, embeddings);
}

void save_autoencoder(std::ostream& out, const AutoEncoder& ae) {
  nn::save_dense(out, ae.encoder);
  nn::save_dense(out, ae.decoder);
  out << "fingerprint " << ae.pretrain_fingerprint << '\n';
}

AutoEncoder load_autoencoder(std::istream& in) {
  AutoEncoder ae;
  ae.encoder = nn::load_dense(in);
  ae.decoder = nn::load_dense(in);
  std::string key;
  if (!(in >> key >> ae.pretrain_fingerprint) || key != "fingerprint")
    throw Error("model-io", "missing fingerprint line");
  ae.embed_dim = ae.encoder.output_dim();
  if (ae.decoder.input_dim() != ae.embed_dim)
    throw Error("model-io", "encoder/decoder embed dims disagree");
  return ae;
}

void save_autoencoder_file(const std::string& path, const AutoEncoder& ae) {
  std::ofstream out(path);
  if (!out) throw Error("model-io", "cannot open " + path + " for writing");
  save_autoencoder(out, ae);
}

AutoEncoder load_autoencoder_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("model-io", "cannot open " + path);
  return load_autoencoder(in);
}

}  // namespace fedeec::autocodec
