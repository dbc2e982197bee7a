#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "avf/backbones.hpp"
#include "avf/nn.hpp"
#include "avf/rng.hpp"

namespace avf {

/// Single-file checkpoint archive: versioned header, the NetworkSpec (JSON),
/// the RNG state, arbitrary string metadata, and named double-precision
/// arrays. Arrays are stored as float64 little-endian with an FNV-1a
/// content hash over the whole payload, verified on load.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  NetworkSpec spec;
  std::uint64_t rng_state = 0;
  std::map<std::string, std::string> meta;   // e.g. stage, epoch, teacher_hash
  std::map<std::string, Vec> arrays;

  void put_params(const std::string& group, ParamMap& params);
  void put_buffers(const std::string& group, BufMap& buffers);
  /// Copies stored values back into live tensors; throws on any missing or
  /// shape-mismatched entry.
  void get_params(const std::string& group, ParamMap& params) const;
  void get_buffers(const std::string& group, BufMap& buffers) const;
  bool has_group(const std::string& group) const;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

/// Hash of one named group inside the archive (order-independent: entries are
/// stored sorted by name). Used for the frozen-teacher invariant.
std::uint64_t group_hash(const Checkpoint& ckpt, const std::string& group);

}  // namespace avf
