#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "amishield/corpus.hpp"
#include "amishield/detector.hpp"
#include "oracles.hpp"

using namespace amishield;
using namespace amishield::detector;
using pcap::Label;

namespace {

bytevis::VisImage image_of(std::vector<std::uint8_t> payload, unsigned order = 5) {
  return bytevis::render(payload, order, bytevis::Curve::hilbert).front();
}

std::vector<LabeledFeatures> split(const std::vector<LabeledFeatures>& d, std::size_t from, std::size_t to) {
  return {d.begin() + static_cast<std::ptrdiff_t>(from), d.begin() + static_cast<std::ptrdiff_t>(to)};
}

}  // namespace

TEST(Featurize, AllBlueImage) {
  const auto f = featurize(image_of(std::vector<std::uint8_t>(1024, 'A')));
  ASSERT_EQ(f.size(), 25u);
  const std::vector<double> global(f.begin(), f.begin() + 5);
  EXPECT_EQ(global, (std::vector<double>{0, 0, 1, 0, 0}));
}

TEST(Featurize, HalfBlueHalfRed) {
  std::vector<std::uint8_t> p(512, 0x41);
  p.resize(1024, 0x90);
  const auto f = featurize(image_of(p));
  EXPECT_NEAR(f[2], 0.5, 1e-12);
  EXPECT_NEAR(f[4], 0.5, 1e-12);
  EXPECT_NEAR(f[0] + f[1] + f[3], 0.0, 1e-12);
}

TEST(Featurize, AllPaddingIsBlackEverywhere) {
  const auto f = featurize(image_of({}));
  for (std::size_t region = 0; region < 5; ++region) {
    EXPECT_DOUBLE_EQ(f[region * 5 + 0], 1.0);
    for (std::size_t c = 1; c < 5; ++c) EXPECT_DOUBLE_EQ(f[region * 5 + c], 0.0);
  }
}

TEST(Featurize, GroupsSumToOne) {
  Rng rng(1);
  for (int t = 0; t < 50; ++t) {
    std::vector<std::uint8_t> p(rng.below(1024));
    for (auto& b : p) b = static_cast<std::uint8_t>(rng.below(256));
    for (unsigned q : {1u, 4u, 16u}) {
      const auto f = featurize(image_of(p), q);
      ASSERT_EQ(f.size(), 5u * (q + 1));
      for (std::size_t g = 0; g < q + 1; ++g) {
        double s = 0;
        for (std::size_t c = 0; c < 5; ++c) {
          EXPECT_GE(f[g * 5 + c], 0.0);
          EXPECT_LE(f[g * 5 + c], 1.0);
          s += f[g * 5 + c];
        }
        EXPECT_NEAR(s, 1.0, 1e-9);
      }
    }
  }
}

TEST(Featurize, BadQuadrantSplit) {
  const auto img = image_of({}, 1);  // 2x2
  for (unsigned q : {0u, 3u, 16u}) {
    try {
      featurize(img, q);
      FAIL() << q;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::BadQuadrantSplit);
    }
  }
}

TEST(Corpus, PayloadShape) {
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    const std::size_t n = corpus::draw_length(rng);
    ASSERT_GE(n, 256u);
    ASSERT_LT(n, 1024u);
    const Label y = i % 2 ? Label::malware : Label::normal;
    const auto p = corpus::make_payload(y, n, rng);
    ASSERT_EQ(p.size(), n);
    const auto h = bytevis::histogram(p);
    const double dom = static_cast<double>(h[static_cast<std::size_t>(y == Label::malware ? bytevis::ColorTag::red
                                                                                           : bytevis::ColorTag::blue)]) /
                       static_cast<double>(n);
    EXPECT_GE(dom, 0.6 - 1e-9);
    EXPECT_LE(dom, 0.9 + 1e-2);
  }
}

TEST(Train, SeparableCorpusReachesHighTrainingAccuracy) {
  const auto data = corpus::make_features(400, 400, 21);
  const Model m = train(data, Hyper{});
  EXPECT_GE(evaluate(m, data).accuracy, 0.95);
  ASSERT_EQ(m.training_log.size(), Hyper{}.epochs + 1u);
  EXPECT_LE(m.training_log.back(), m.training_log.front());
  for (double w : m.network.params) EXPECT_TRUE(std::isfinite(w));
}

TEST(Train, HeldOutAccuracyAndFalsePositives) {
  const auto data = corpus::make_features(500, 500, 22);
  const Model m = train(split(data, 0, 800), Hyper{});
  const auto metrics = evaluate(m, split(data, 800, 1000));
  EXPECT_GE(metrics.accuracy, 0.90);
  EXPECT_LE(metrics.false_positive_rate, 0.10);
}

TEST(Train, LossMostlyDecreasesEarly) {
  const auto data = corpus::make_features(300, 300, 23);
  const Model m = train(data, Hyper{});
  int violations = 0;
  for (std::size_t e = 1; e <= 10; ++e) violations += m.training_log[e] > m.training_log[e - 1];
  EXPECT_LE(violations, 1);
}

TEST(Train, SingleClassIsDegenerate) {
  auto data = corpus::make_features(30, 0, 1);
  for (auto kind : {ModelKind::mlp, ModelKind::knn}) {
    Hyper h;
    h.kind = kind;
    try {
      train(data, h);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::DegenerateDataset);
    }
  }
}

TEST(Train, KnnNeedsAtLeastKExemplars) {
  const auto data = corpus::make_features(2, 2, 1);
  Hyper h;
  h.kind = ModelKind::knn;
  h.k = 5;
  EXPECT_THROW(train(data, h), Error);
  h.k = 4;
  EXPECT_NO_THROW(train(data, h));
}

TEST(Train, Deterministic) {
  const auto data = corpus::make_features(100, 100, 5);
  const Model a = train(data, Hyper{}), b = train(data, Hyper{});
  EXPECT_EQ(a.network, b.network);
  EXPECT_EQ(a.training_log, b.training_log);
  Hyper other;
  other.seed = 2;
  EXPECT_NE(train(data, other).network, a.network);
}

TEST(Train, NonFiniteLossIsReported) {
  auto data = corpus::make_features(50, 50, 5);
  data[3].x[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    train(data, Hyper{});
    FAIL() << "expected NonFiniteLoss";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonFiniteLoss);
  }
}

TEST(Classify, KnnExemplarReturnsItsLabel) {
  const auto data = corpus::make_features(20, 20, 6);
  Hyper h;
  h.kind = ModelKind::knn;
  h.k = 1;
  const Model m = train(data, h);
  for (const auto& s : data) {
    const Verdict v = classify_features(m, s.x);
    EXPECT_EQ(v.label, s.y);
    EXPECT_TRUE(v.score == 0.0 || v.score == 1.0);
  }
  EXPECT_DOUBLE_EQ(evaluate(m, data).accuracy, 1.0);
}

TEST(Classify, AllPaddingImageStillGetsAVerdict) {
  const Model m = train(corpus::make_features(50, 50, 7), Hyper{});
  const Verdict v = classify(m, image_of({}));
  EXPECT_GE(v.score, 0.0);
  EXPECT_LE(v.score, 1.0);
  EXPECT_EQ(v.label == Label::malware, v.score >= 0.5);
}

TEST(Classify, ScoresStayInUnitIntervalForWildInputs) {
  Rng rng(8);
  const Model m = train(corpus::make_features(50, 50, 8), Hyper{});
  for (int i = 0; i < 200; ++i) {
    std::vector<double> x(25);
    for (auto& v : x) v = rng.uniform(-1e6, 1e6);
    const double s = score(m, x);
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
  }
}

TEST(Update, EmptyBatchLeavesModelUnchanged) {
  const Model m = train(corpus::make_features(40, 40, 9), Hyper{});
  const Model n = update(m, std::vector<LabeledFeatures>{});
  EXPECT_EQ(n.network, m.network);
  EXPECT_EQ(n.buffer.size(), m.buffer.size());
  EXPECT_EQ(n.updates, m.updates);
}

TEST(Update, UnseenMalwarePatternDoesNotGetWorse) {
  const auto base = corpus::make_features(300, 300, 10);
  const Model m = train(base, Hyper{});
  const auto fresh = corpus::make_features(0, 50, 11, corpus::Variant::red_control);
  const auto probe = corpus::make_features(0, 200, 12, corpus::Variant::red_control);
  const double before = evaluate(m, probe).accuracy;
  const Model n = update(m, fresh);
  const double after = evaluate(n, probe).accuracy;
  EXPECT_GE(after, before);
  EXPECT_GE(evaluate(n, fresh).accuracy, evaluate(m, fresh).accuracy);
  // the original task is not forgotten
  EXPECT_GE(evaluate(n, corpus::make_features(100, 100, 13)).accuracy, 0.9);
}

TEST(Update, KnnDeduplicatesRepeatedBatches) {
  Hyper h;
  h.kind = ModelKind::knn;
  const Model m = train(corpus::make_features(20, 20, 14), h);
  const auto batch = corpus::make_features(5, 5, 15);
  const Model once = update(m, batch);
  const Model twice = update(once, batch);
  EXPECT_EQ(once.buffer.size(), m.buffer.size() + 10);
  EXPECT_EQ(twice.buffer.size(), once.buffer.size());
}

TEST(Update, BufferIsFifoCapped) {
  Hyper h;
  h.kind = ModelKind::knn;
  h.buffer_cap = 30;
  const auto data = corpus::make_features(20, 20, 16);
  const Model m = train(data, h);
  ASSERT_EQ(m.buffer.size(), 30u);
  EXPECT_EQ(m.buffer.front().x, data[10].x);
  const auto extra = corpus::make_features(3, 3, 17);
  const Model n = update(m, extra);
  EXPECT_EQ(n.buffer.size(), 30u);
  EXPECT_EQ(n.buffer.back().x, extra.back().x);
}

TEST(Evaluate, ConstantNormalModel) {
  Hyper h;
  h.threshold = 1.5;  // nothing reaches it
  const auto data = corpus::make_features(50, 50, 18);
  const Model m = train(data, h);
  const Metrics r = evaluate(m, data);
  EXPECT_DOUBLE_EQ(r.accuracy, 0.5);
  EXPECT_DOUBLE_EQ(r.false_positive_rate, 0.0);
  EXPECT_DOUBLE_EQ(r.false_negative_rate, 1.0);
}

TEST(Evaluate, EmptyDataset) {
  const Model m = train(corpus::make_features(10, 10, 19), Hyper{});
  try {
    evaluate(m, std::vector<LabeledFeatures>{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyDataset);
  }
}

TEST(Gradient, MatchesCentralDifferences) {
  Rng rng(20);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t inputs = 2 + rng.below(6), hidden = 1 + rng.below(6);
    const auto net = mlp::init(inputs, hidden, rng);
    std::vector<double> x(inputs);
    for (auto& v : x) v = rng.uniform(-1, 1);
    const double y = rng.bernoulli(0.5) ? 1.0 : 0.0;
    std::vector<double> analytic;
    mlp::loss_and_gradient(net, x, y, analytic);
    EXPECT_LT(oracle::relative_error(analytic, oracle::numeric_gradient(net, x, y)), 1e-4);
  }
}

TEST(Persistence, JsonRoundTrip) {
  const Model m = train(corpus::make_features(30, 30, 21), Hyper{});
  const Model back = model_from_json(nlohmann::json::parse(to_json(m).dump()));
  EXPECT_EQ(back.network, m.network);
  EXPECT_EQ(back.hyper, m.hyper);
  EXPECT_EQ(back.buffer.size(), m.buffer.size());
  auto doc = to_json(m);
  doc["format_version"] = 99;
  EXPECT_THROW(model_from_json(doc), Error);
}
