#pragma once

#include <iosfwd>

#include "fedeec/nn.hpp"
#include "fedeec/types.hpp"

namespace fedeec::autocodec {

/// Shared lightweight autoencoder. The decoder is replicated on every node
/// to turn embeddings back into bridge samples; the encoder lives only on
/// leaves. Both halves are frozen once pretrained.
struct AutoEncoder {
  nn::DenseModel encoder;  // input_dim -> embed_dim
  nn::DenseModel decoder;  // embed_dim -> input_dim
  int embed_dim = 0;
  std::uint64_t pretrain_fingerprint = 0;

  long param_count() const { return encoder.param_count() + decoder.param_count(); }
  std::uint64_t decoder_checksum() const { return nn::weight_checksum(decoder); }
};

struct PretrainConfig {
  int input_dim = 16;
  int embed_dim = 4;
  int hidden_dim = 8;        // one hidden layer in each half
  int epochs = 200;
  double lr = 0.02;
  int batch_size = 32;
  double mse_max = 0.05;     // held-out reconstruction MSE gate
  double holdout_fraction = 0.2;
};

/// Raised when the reconstruction gate is missed within the epoch budget.
class PretrainError : public Error {
public:
  PretrainError(double achieved, double limit)
      : Error("autocodec-pretrain",
              "held-out MSE " + std::to_string(achieved) + " exceeds mse_max " +
                  std::to_string(limit)),
        achieved_mse(achieved) {}
  double achieved_mse;
};

/// Train encoder+decoder on the public corpus to minimize reconstruction
/// MSE. Deterministic for a fixed seed; epochs == 0 returns the seeded
/// initialization (and skips the MSE gate).
AutoEncoder pretrain(const Matrix& corpus, const PretrainConfig& cfg, std::uint64_t seed);

/// Mean squared reconstruction error per scalar.
double reconstruction_mse(const AutoEncoder& ae, const Matrix& samples);

Vector encode(const AutoEncoder& ae, const Vector& x);
Matrix encode_batch(const AutoEncoder& ae, const Matrix& x);

Vector decode(const AutoEncoder& ae, const Vector& embedding);
Matrix decode_batch(const AutoEncoder& ae, const Matrix& embeddings);

/// Two model sections (encoder, decoder) in the flat dense format plus a
/// fingerprint line.
void save_autoencoder(std::ostream& out, const AutoEncoder& ae);
AutoEncoder load_autoencoder(std::istream& in);
void save_autoencoder_file(const std::string& path, const AutoEncoder& ae);
AutoEncoder load_autoencoder_file(const std::string& path);

}  // namespace fedeec::autocodec
