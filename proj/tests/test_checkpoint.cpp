#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "lrf/architectures.hpp"
#include "lrf/checkpoint.hpp"
#include "lrf/corpus.hpp"
#include "lrf/trainer.hpp"

using namespace lrf;

namespace {

Checkpoint random_checkpoint(const NetworkSpec& spec, std::uint64_t seed) {
  Network<double> net(spec);
  net.init(seed);
  return make_checkpoint(spec, net.params());
}

std::string bytes(const Checkpoint& ck) {
  std::ostringstream os;
  write_checkpoint(os, ck);
  return os.str();
}

}  // namespace

TEST(Checkpoint, RoundTripAllFamilies) {
  for (const auto& spec : {build_standard(5, 2, 6, 3, 4), build_recnet(3, 2, 3, 4, 3, 4), build_hgnet(2, 3, 2, 4, 3, 4),
                           build_tdnn({{1, 2}}, 5, 3, 4), build_dilnet(3, {2, 4}, 4, 3, 4)}) {
    const auto ck = random_checkpoint(spec, 3);
    std::istringstream is(bytes(ck));
    const auto back = read_checkpoint(is);
    EXPECT_EQ(back.spec, spec);
    ASSERT_EQ(back.params.size(), ck.params.size());
    for (std::size_t i = 0; i < ck.params.size(); ++i) {
      EXPECT_EQ(back.params[i].name, ck.params[i].name);
      EXPECT_EQ(back.params[i].value, ck.params[i].value);
    }
    EXPECT_EQ(bytes(back), bytes(ck));
  }
}

TEST(Checkpoint, BadMagic) {
  auto b = bytes(random_checkpoint(build_standard(3, 1, 4, 3, 2), 1));
  b[0] = 'X';
  std::istringstream is(b);
  EXPECT_THROW(read_checkpoint(is), Error);
  std::istringstream empty("");
  EXPECT_THROW(read_checkpoint(empty), Error);
}

TEST(Checkpoint, ShapeMismatchNamesParameter) {
  const auto a = build_standard(3, 2, 4, 3, 2);
  const auto b = build_standard(3, 2, 5, 3, 2);
  Checkpoint forged{a, random_checkpoint(b, 1).params};
  std::istringstream is(bytes(forged));
  try {
    read_checkpoint(is);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.where(), "conv1.weight");
  }
}

TEST(Checkpoint, CountMismatchAndTruncation) {
  Checkpoint forged{build_standard(3, 2, 4, 3, 2), random_checkpoint(build_standard(3, 3, 4, 3, 2), 1).params};
  std::istringstream is(bytes(forged));
  EXPECT_THROW(read_checkpoint(is), Error);
  auto b = bytes(random_checkpoint(build_standard(3, 1, 4, 3, 2), 1));
  b.resize(b.size() - 4);
  std::istringstream cut(b);
  EXPECT_THROW(read_checkpoint(cut), Error);
}

TEST(Checkpoint, ResumedEvaluationIsIdentical) {
  CorpusConfig cc;
  cc.num_classes = 4;
  cc.train_utts = 12;
  cc.dev_utts = cc.eval_utts = 4;
  cc.frames_per_utt = 100;
  const auto c = generate_corpus(cc);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.crop_frames = 64;
  const auto r = train(build_standard(5, 2, 8, 4), make_dataset(c, Split::Train), make_dataset(c, Split::Dev), cfg);
  const auto path = (std::filesystem::temp_directory_path() / "lrf_ck_resume.lrf").string();
  save_checkpoint(path, r.best);
  const auto back = load_checkpoint(path);
  const auto ev = make_dataset(c, Split::Eval);
  const auto m1 = evaluate(r.best, ev), m2 = evaluate(back, ev);
  EXPECT_EQ(m1.frame_accuracy, m2.frame_accuracy);
  EXPECT_EQ(m1.cross_entropy, m2.cross_entropy);
  std::filesystem::remove(path);
}
