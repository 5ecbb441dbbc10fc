// Copyright 2026 the e2e-asr authors
// Licensed under the Apache License, Version 2.0
//
// INI-style configuration: [section] headers, key = value lines, # or ;
// comments. Keys are addressed as "section.key".

#ifndef E2E_CONFIG_HPP_
#define E2E_CONFIG_HPP_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>

namespace e2e {

class Config {
 public:
  static Config load(const std::string& path);
  static Config parse(std::istream& in);

  bool has(const std::string& key) const { return kv_.count(key) > 0; }
  /// Throws std::invalid_argument naming the key when absent.
  const std::string& get(const std::string& key) const;
  std::string get(const std::string& key, const std::string& fallback) const;
  int64_t get_int(const std::string& key, int64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  void set(const std::string& key, const std::string& value) { kv_[key] = value; }
  const std::map<std::string, std::string>& entries() const { return kv_; }

  /// FNV-1a over sorted key=value pairs; embedded in training logs.
  uint64_t hash() const;

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace e2e

#endif  // E2E_CONFIG_HPP_
