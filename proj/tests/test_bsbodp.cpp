#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fedeec/bsbodp.hpp"
#include "fedeec/datagen.hpp"
#include "support/finite_diff.hpp"
#include "support/generators.hpp"

using namespace fedeec;
using testsupport::random_labels;
using testsupport::random_matrix;

namespace {

struct Fixture {
  autocodec::AutoEncoder codec;
  nn::DenseModel teacher;
  nn::DenseModel student;
  Matrix embeddings;
  IntVector labels;
  bsbodp::DistillConfig cfg;

  explicit Fixture(std::uint64_t seed, int n = 24, int classes = 4) {
    auto space = datagen::GaussianMixture::create(classes, 16, 1.5, seed);
    Matrix corpus = space.sample_inputs(600, derive_seed(seed, "public"));
    autocodec::PretrainConfig ae;
    ae.epochs = 80;
    ae.mse_max = 1e9;
    codec = autocodec::pretrain(corpus, ae, seed);

    RngStream s(seed);
    teacher = nn::init_dense({16, 10, classes}, s);
    student = nn::init_dense({16, 12, classes}, s);
    auto data = space.sample(n, derive_seed(seed, "pair"));
    embeddings = autocodec::encode_batch(codec, data.inputs);
    labels = data.labels;
  }
};

}  // namespace

TEST_CASE("teacher_emit: rectification bypass sends the raw temperature softmax") {
  Fixture fx(1);
  fx.cfg.skr_enabled = false;
  skr::KnowledgeQueues queues(4, 20);
  skr::OutcomeCounts counts;
  auto batch = bsbodp::teacher_emit(fx.teacher, queues, fx.embeddings, fx.labels, fx.codec,
                                    fx.cfg, &counts);

  const Matrix expected =
      nn::softmax_rows(nn::forward(fx.teacher, autocodec::decode_batch(fx.codec, fx.embeddings)),
                       fx.cfg.temperature);
  CHECK((batch.knowledge - expected).cwiseAbs().maxCoeff() == 0.0);
  for (char r : batch.rectified) CHECK(r == 0);
  CHECK(counts.correct + counts.misattributed_unrectified + counts.misattributed_rectified == 0);
  for (int c = 0; c < 4; ++c) CHECK(queues.for_class(c).empty());
}

TEST_CASE("teacher_emit: all-correct teacher grows queues, rectifies nothing") {
  Fixture fx(2, 16, 2);
  // craft a teacher whose top class always matches the label: overwrite
  // labels with the teacher's own argmax
  fx.cfg.skr_enabled = true;
  const Matrix probs = nn::softmax_rows(
      nn::forward(fx.teacher, autocodec::decode_batch(fx.codec, fx.embeddings)),
      fx.cfg.temperature);
  for (Index i = 0; i < fx.labels.size(); ++i) {
    Index argmax;
    probs.row(i).maxCoeff(&argmax);
    fx.labels[i] = static_cast<int>(argmax);
  }
  skr::KnowledgeQueues queues(2, 20);
  skr::OutcomeCounts counts;
  auto batch = bsbodp::teacher_emit(fx.teacher, queues, fx.embeddings, fx.labels, fx.codec,
                                    fx.cfg, &counts);
  CHECK(counts.correct == static_cast<std::uint64_t>(fx.labels.size()));
  CHECK(counts.misattributed_rectified == 0);
  for (char r : batch.rectified) CHECK(r == 0);
  CHECK(queues.for_class(0).size() + queues.for_class(1).size() ==
        static_cast<std::size_t>(fx.labels.size()));
}

TEST_CASE("teacher_emit: zero-weight teacher emits uniform rows as ties") {
  Fixture fx(3);
  for (auto& w : fx.teacher.weights) w.setZero();
  for (auto& b : fx.teacher.biases) b.setZero();
  skr::KnowledgeQueues queues(4, 20);
  skr::queue_push(queues.for_class(0), 0.9);  // history must stay unused: ties are correct
  skr::OutcomeCounts counts;
  auto batch = bsbodp::teacher_emit(fx.teacher, queues, fx.embeddings, fx.labels, fx.codec,
                                    fx.cfg, &counts);
  CHECK(counts.misattributed_rectified == 0);
  CHECK(counts.misattributed_unrectified == 0);
  CHECK(counts.correct == static_cast<std::uint64_t>(fx.labels.size()));
  for (Index i = 0; i < batch.knowledge.rows(); ++i)
    for (Index j = 0; j < batch.knowledge.cols(); ++j)
      CHECK(batch.knowledge(i, j) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("distill_loss: beta = 0 non-leaf loss is plain bridge cross-entropy") {
  Fixture fx(4);
  skr::KnowledgeQueues queues(4, 20);
  auto batch = bsbodp::teacher_emit(fx.teacher, queues, fx.embeddings, fx.labels, fx.codec,
                                    fx.cfg, nullptr);
  bsbodp::DistillConfig cfg = fx.cfg;
  cfg.beta = 0.0;
  auto loss = bsbodp::distill_loss(fx.student, batch, cfg, false);
  CHECK(loss.total == doctest::Approx(loss.ce_term).epsilon(1e-15));
  CHECK(loss.local_ce_term == 0.0);

  // cross-check the CE term directly
  const Matrix p = nn::softmax_rows(nn::forward(fx.student, batch.decoded), 1.0);
  double ce = 0.0;
  for (Index i = 0; i < p.rows(); ++i) ce += -std::log(p(i, batch.labels[i]));
  ce /= static_cast<double>(p.rows());
  CHECK(loss.ce_term == doctest::Approx(ce).epsilon(1e-12));
}

TEST_CASE("distill_loss: identical weights at T=1 zero the divergence term") {
  Fixture fx(5);
  fx.cfg.temperature = 1.0;
  fx.cfg.skr_enabled = false;
  skr::KnowledgeQueues queues(4, 20);
  auto batch = bsbodp::teacher_emit(fx.teacher, queues, fx.embeddings, fx.labels, fx.codec,
                                    fx.cfg, nullptr);
  auto loss = bsbodp::distill_loss(fx.teacher, batch, fx.cfg, false);  // student == teacher
  CHECK(loss.kl_term == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(loss.total == doctest::Approx(loss.ce_term).epsilon(1e-12));
}

TEST_CASE("loss breakdown identity holds to 1e-12") {
  Fixture fx(6);
  skr::KnowledgeQueues queues(4, 20);
  auto batch = bsbodp::teacher_emit(fx.teacher, queues, fx.embeddings, fx.labels, fx.codec,
                                    fx.cfg, nullptr);
  auto space = datagen::GaussianMixture::create(4, 16, 1.5, 6);
  auto priv = space.sample(20, 99);

  auto non_leaf = bsbodp::distill_loss(fx.student, batch, fx.cfg, false);
  CHECK(std::abs(non_leaf.total - (non_leaf.ce_term + fx.cfg.beta * non_leaf.kl_term)) < 1e-12);

  auto leaf = bsbodp::distill_loss(fx.student, batch, fx.cfg, true, &priv.inputs, &priv.labels);
  CHECK(std::abs(leaf.total - (leaf.local_ce_term +
                               fx.cfg.gamma * (leaf.ce_term + fx.cfg.beta * leaf.kl_term))) <
        1e-12);
}

TEST_CASE("distill gradients match finite differences for every loss variant") {
  RngStream meta(7);
  int done = 0;
  int attempt = 0;
  while (done < 12) {
    Fixture fx(100 + attempt++, 6);
    auto space = datagen::GaussianMixture::create(4, 16, 1.5, 200 + done);
    auto priv = space.sample(6, 3);

    skr::KnowledgeQueues queues(4, 20);
    // force some rectified rows by preloading history
    for (int c = 0; c < 4; ++c) skr::queue_push(queues.for_class(c), 0.4 + 0.1 * c);
    const bool rectified_variant = done % 2 == 0;
    bsbodp::DistillConfig cfg = fx.cfg;
    cfg.skr_enabled = rectified_variant;
    cfg.student_temperature = (done % 4 >= 2);
    auto batch =
        bsbodp::teacher_emit(fx.teacher, queues, fx.embeddings, fx.labels, fx.codec, cfg, nullptr);

    const bool is_leaf = done % 3 == 0;
    if (!testsupport::relu_kink_margin_ok(fx.student, batch.decoded) ||
        (is_leaf && !testsupport::relu_kink_margin_ok(fx.student, priv.inputs)))
      continue;

    auto analytic = bsbodp::distill_gradients(fx.student, batch, cfg, is_leaf, &priv.inputs,
                                              &priv.labels);
    auto numeric = testsupport::finite_diff_gradients(
        fx.student,
        [&](const nn::DenseModel& m) {
          return bsbodp::distill_loss(m, batch, cfg, is_leaf, &priv.inputs, &priv.labels).total;
        });
    CHECK(testsupport::max_relative_error(analytic, numeric) < 1e-4);
    ++done;
  }
}

TEST_CASE("student_update: gamma = 0 makes the leaf depend only on private data") {
  Fixture fx(8);
  skr::KnowledgeQueues queues(4, 20);
  auto batch = bsbodp::teacher_emit(fx.teacher, queues, fx.embeddings, fx.labels, fx.codec,
                                    fx.cfg, nullptr);
  auto space = datagen::GaussianMixture::create(4, 16, 1.5, 8);
  auto priv = space.sample(24, 5);

  bsbodp::DistillConfig cfg = fx.cfg;
  cfg.gamma = 0.0;

  nn::DenseModel a = fx.student;
  RngStream sa(77);
  bsbodp::student_update(a, batch, cfg, true, &priv.inputs, &priv.labels, sa);

  bsbodp::BridgeBatch perturbed = batch;
  perturbed.knowledge.setConstant(1.0 / 4.0);  // entirely different teacher knowledge
  nn::DenseModel b = fx.student;
  RngStream sb(77);
  bsbodp::student_update(b, perturbed, cfg, true, &priv.inputs, &priv.labels, sb);

  CHECK(nn::weight_checksum(a) == nn::weight_checksum(b));
}

TEST_CASE("pair round: child learns first, fixed stream makes it bit deterministic") {
  auto run_once = [](std::uint64_t stream_seed) {
    Fixture fx(9);
    auto space = datagen::GaussianMixture::create(4, 16, 1.5, 9);
    auto priv = space.sample(24, 7);
    nn::DenseModel child_model = fx.teacher;
    nn::DenseModel parent_model = fx.student;
    skr::KnowledgeQueues child_q(4, 20), parent_q(4, 20);
    bsbodp::PairNodeRef child{&child_model, &child_q, true, &priv.inputs, &priv.labels};
    bsbodp::PairNodeRef parent{&parent_model, &parent_q, false, nullptr, nullptr};
    RngStream stream(stream_seed);
    auto result = bsbodp::bsbodp_pair_round(child, parent, fx.embeddings, fx.labels, fx.codec,
                                            fx.cfg, stream);
    return std::make_tuple(nn::weight_checksum(child_model), nn::weight_checksum(parent_model),
                           result.child_as_student.losses.size());
  };
  auto a = run_once(5);
  auto b = run_once(5);
  CHECK(a == b);
  auto c = run_once(6);
  CHECK(std::get<0>(a) != std::get<0>(c));
}

TEST_CASE("pair round: shared decoder alignment is bitwise") {
  Fixture fx(10);
  const Matrix once = autocodec::decode_batch(fx.codec, fx.embeddings);
  const Matrix again = autocodec::decode_batch(fx.codec, fx.embeddings);
  CHECK((once - again).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("student_update: local epochs multiply the step count") {
  Fixture fx(11);
  skr::KnowledgeQueues queues(4, 20);
  auto batch = bsbodp::teacher_emit(fx.teacher, queues, fx.embeddings, fx.labels, fx.codec,
                                    fx.cfg, nullptr);
  bsbodp::DistillConfig cfg = fx.cfg;
  cfg.local_epochs = 3;
  RngStream s(1);
  auto history = bsbodp::student_update(fx.student, batch, cfg, false, nullptr, nullptr, s);
  const int steps_per_epoch = (24 + cfg.batch_size - 1) / cfg.batch_size;
  CHECK(history.size() == static_cast<std::size_t>(3 * steps_per_epoch));
}
