#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <string>

#include "oilca/num/checkpoint.hpp"
#include "oilca/num/mlp.hpp"
#include "oilca/num/rng.hpp"
#include "oilca/num/tensor.hpp"

using oilca::num::Checkpoint;
using oilca::num::Mlp;
using oilca::num::Rng;
using oilca::num::Tensor2;

namespace {

std::string tmp_path(const char* stem) {
  return std::string("ckpt_test_") + stem + ".bin";
}

}  // namespace

TEST_CASE("MLP round-trips bit-for-bit", "[checkpoint]") {
  Rng rng(404);
  const Mlp net(6, {32, 32}, 2, oilca::num::Activation::Softplus,
                oilca::num::Activation::Identity, rng);
  Checkpoint ck;
  ck.kind = "policy";
  ck.seed = 404;
  ck.steps = 1234;
  oilca::num::put_mlp(ck, "net", net);

  const std::string path = tmp_path("roundtrip");
  ck.save(path);
  const Checkpoint back = Checkpoint::load(path);
  REQUIRE(back.kind == "policy");
  REQUIRE(back.seed == 404);
  REQUIRE(back.steps == 1234);

  const Mlp loaded = oilca::num::get_mlp(back, "net");
  REQUIRE(loaded.dims() == net.dims());
  const auto a = net.params();
  const auto b = loaded.params();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    REQUIRE(a[i]->content_hash() == b[i]->content_hash());

  const Tensor2 probe = Tensor2::from_data(1, 6, {0.1, -0.2, 0.3, 2, -1, 0.5});
  REQUIRE(net.eval(probe).content_hash() == loaded.eval(probe).content_hash());
  std::remove(path.c_str());
}

TEST_CASE("loader rejects manifests that disagree with tensors",
          "[checkpoint]") {
  Rng rng(7);
  const Mlp net(2, {3}, 1, oilca::num::Activation::Tanh,
                oilca::num::Activation::Identity, rng);
  Checkpoint ck;
  ck.kind = "probe";
  oilca::num::put_mlp(ck, "net", net);
  const std::string path = tmp_path("dims");
  ck.save(path);

  // Corrupt the declared layer dims: the loader must reject the mismatch.
  std::ifstream is(path, std::ios::binary);
  std::string blob((std::istreambuf_iterator<char>(is)),
                   std::istreambuf_iterator<char>());
  is.close();
  const std::string needle = "net.dims = 2,3,1";
  const auto pos = blob.find(needle);
  REQUIRE(pos != std::string::npos);
  blob.replace(pos, needle.size(), "net.dims = 2,4,1");
  std::ofstream os(path, std::ios::binary);
  os.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  os.close();

  const Checkpoint tampered = Checkpoint::load(path);
  REQUIRE_THROWS_AS(oilca::num::get_mlp(tampered, "net"), oilca::FormatError);
  std::remove(path.c_str());
}

TEST_CASE("loader rejects structural damage", "[checkpoint]") {
  REQUIRE_THROWS_AS(Checkpoint::load("no_such_checkpoint.bin"),
                    oilca::PrerequisiteError);

  Checkpoint ck;
  ck.kind = "probe";
  ck.add_tensor("t", Tensor2::filled(2, 2, 1.5));
  const std::string path = tmp_path("damage");
  ck.save(path);

  // Truncated blob.
  {
    std::ifstream is(path, std::ios::binary);
    std::string blob((std::istreambuf_iterator<char>(is)),
                     std::istreambuf_iterator<char>());
    is.close();
    std::ofstream os(path, std::ios::binary);
    os.write(blob.data(), static_cast<std::streamsize>(blob.size() - 9));
  }
  REQUIRE_THROWS_AS(Checkpoint::load(path), oilca::FormatError);

  // Trailing junk after the blob.
  ck.save(path);
  {
    std::ofstream os(path, std::ios::binary | std::ios::app);
    os << "junk";
  }
  REQUIRE_THROWS_AS(Checkpoint::load(path), oilca::FormatError);

  // Bad magic line.
  {
    std::ofstream os(path, std::ios::binary);
    os << "some other file\n";
  }
  REQUIRE_THROWS_AS(Checkpoint::load(path), oilca::FormatError);
  std::remove(path.c_str());
}

TEST_CASE("meta entries round-trip in order", "[checkpoint]") {
  Checkpoint ck;
  ck.kind = "cvae";
  ck.set_meta("zeta", "last");
  ck.set_meta("alpha", "first");
  ck.set_meta("zeta", "overwritten");
  ck.add_tensor("prior.mean", Tensor2::filled(3, 2, 0.25));
  const std::string path = tmp_path("meta");
  ck.save(path);
  const Checkpoint back = Checkpoint::load(path);
  REQUIRE(back.meta.size() == 2);
  REQUIRE(back.meta[0].first == "zeta");
  REQUIRE(back.meta[0].second == "overwritten");
  REQUIRE(back.meta[1].first == "alpha");
  REQUIRE(back.meta_at("alpha") == "first");
  REQUIRE(back.has_meta("zeta"));
  REQUIRE_FALSE(back.has_meta("gamma"));
  REQUIRE(back.tensor("prior.mean").at(2, 1) == 0.25);
  REQUIRE_THROWS_AS(back.tensor("absent"), oilca::FormatError);
  std::remove(path.c_str());
}

TEST_CASE("duplicate tensor names are rejected at insert", "[checkpoint]") {
  Checkpoint ck;
  ck.add_tensor("w", Tensor2(1, 1));
  REQUIRE_THROWS_AS(ck.add_tensor("w", Tensor2(1, 1)), oilca::ContractError);
}
