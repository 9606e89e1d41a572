#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

#include "pren/cascade.hpp"
#include "pren/data.hpp"
#include "pren/model.hpp"

namespace pren {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Flat `key = value` configuration with '#' comments. Every key has a
// documented default; unknown keys are rejected before anything runs.
class RunConfig {
 public:
  RunConfig();  // defaults only

  static RunConfig from_file(const std::string& path);
  static RunConfig from_text(const std::string& text);

  void set(const std::string& key, const std::string& value);

  const std::string& get(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;

  // Fully resolved "key = value" lines in key order; stable across runs.
  std::string echo() const;
  // FNV-1a over echo(); embedded in output headers for provenance.
  std::uint64_t hash() const;

  BackboneConfig backbone() const;
  InitCnnConfig init_cnn() const;
  PoseRenConfig pose_ren() const;
  CascadeConfig cascade() const;
  SyntheticHandSpec hand_spec() const;
  CameraIntrinsics camera() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace pren
