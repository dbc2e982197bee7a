#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "avf/checkpoint.hpp"

using namespace avf;

namespace {
struct TempFile {
  std::string path;
  explicit TempFile(const std::string& p) : path(p) {}
  ~TempFile() { std::remove(path.c_str()); }
};
}  // namespace

TEST_CASE("bundle round-trips bit-exactly through the archive") {
  TempFile tmp("/tmp/avf_ckpt_roundtrip.bin");
  ModelBundle a = ModelBundle::create(NetworkSpec::tiny(), 7);
  Checkpoint out;
  out.spec = a.spec;
  out.rng_state = 123456789ULL;
  out.meta["stage"] = "1";
  ParamMap ap = a.student_params();
  BufMap ab = a.student_buffers();
  out.put_params("student", ap);
  out.put_buffers("student_buf", ab);
  out.save(tmp.path);

  Checkpoint in = Checkpoint::load(tmp.path);
  CHECK(in.rng_state == 123456789ULL);
  CHECK(in.meta.at("stage") == "1");
  CHECK(in.spec.to_json() == a.spec.to_json());

  ModelBundle b = ModelBundle::create(NetworkSpec::tiny(), 99);  // different init
  ParamMap bp = b.student_params();
  BufMap bb = b.student_buffers();
  in.get_params("student", bp);
  in.get_buffers("student_buf", bb);
  for (std::size_t i = 0; i < ap.items.size(); ++i)
    REQUIRE(ap.items[i].second.value() == bp.items[i].second.value());
  for (std::size_t i = 0; i < ab.items.size(); ++i)
    REQUIRE(*ab.items[i].second == *bb.items[i].second);
}

TEST_CASE("a flipped payload byte is caught by the content hash") {
  TempFile tmp("/tmp/avf_ckpt_corrupt.bin");
  Checkpoint out;
  out.spec = NetworkSpec::tiny();
  out.arrays["g/w"] = Vec::Constant(16, 0.25);
  out.save(tmp.path);

  std::ifstream f(tmp.path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  f.close();
  bytes[bytes.size() / 2] ^= 0x01;
  std::ofstream(tmp.path, std::ios::binary).write(bytes.data(), bytes.size());
  CHECK_THROWS_WITH_AS(Checkpoint::load(tmp.path),
                       doctest::Contains("hash mismatch"), std::runtime_error);
}

TEST_CASE("missing and mis-shaped arrays are rejected on restore") {
  Checkpoint ckpt;
  ckpt.spec = NetworkSpec::tiny();
  ckpt.arrays["g/a.w"] = Vec::Constant(4, 1.0);
  Tensor t = Tensor::zeros({2, 2}, true);
  ParamMap p;
  p.add("a.w", t);
  ckpt.get_params("g", p);  // exact fit: fine
  CHECK(t.value()[0] == 1.0);

  ParamMap missing;
  Tensor t2 = Tensor::zeros({4}, true);
  missing.add("other.w", t2);
  CHECK_THROWS_AS(ckpt.get_params("g", missing), std::runtime_error);

  ParamMap wrong;
  Tensor t3 = Tensor::zeros({3}, true);
  wrong.add("a.w", t3);
  CHECK_THROWS_AS(ckpt.get_params("g", wrong), std::runtime_error);
}

TEST_CASE("group hash flags hand-corrupted teacher weights") {
  Checkpoint ckpt;
  ckpt.spec = NetworkSpec::tiny();
  ckpt.arrays["teacher/a.w"] = Vec::Constant(8, 0.5);
  ckpt.arrays["teacher/b.w"] = Vec::Constant(8, -0.5);
  ckpt.arrays["student/a.w"] = Vec::Constant(8, 0.1);
  const std::uint64_t before = group_hash(ckpt, "teacher");
  CHECK(group_hash(ckpt, "teacher") == before);  // stable
  ckpt.arrays["student/a.w"][0] = 9.0;
  CHECK(group_hash(ckpt, "teacher") == before);  // other groups don't leak in
  ckpt.arrays["teacher/a.w"][3] += 1e-12;
  CHECK(group_hash(ckpt, "teacher") != before);
  CHECK_THROWS_AS(group_hash(ckpt, "nonexistent"), std::runtime_error);
}

TEST_CASE("bad magic and missing files are explicit errors") {
  TempFile tmp("/tmp/avf_ckpt_magic.bin");
  std::ofstream(tmp.path, std::ios::binary) << "NOPE-not-a-checkpoint-archive";
  CHECK_THROWS_WITH_AS(Checkpoint::load(tmp.path), doctest::Contains("magic"),
                       std::runtime_error);
  CHECK_THROWS_AS(Checkpoint::load("/tmp/avf_does_not_exist.bin"), std::runtime_error);
}
