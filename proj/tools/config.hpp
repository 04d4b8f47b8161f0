#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "mixopt/error.hpp"
#include "toml.hpp"

namespace mixopt::cli {

/// Typed, strict view of one TOML table (the root when `name` is empty).
/// Every value read or defaulted is echoed into `effective`; `finish`
/// rejects keys that were never read.
class Section {
 public:
  Section(const toml::table* table, std::string name, nlohmann::json& effective)
      : table_(table), name_(std::move(name)), effective_(name_.empty() ? effective : effective[name_]) {
    if (effective_.is_null()) effective_ = nlohmann::json::object();
  }

  std::size_t count(const std::string& key, std::size_t fallback, std::size_t minimum = 1) {
    std::size_t v = fallback;
    if (const auto* node = lookup(key)) {
      const auto* i = node->as_integer();
      if (!i) fail(key, "expected an integer");
      if (i->get() < static_cast<std::int64_t>(minimum)) fail(key, "must be at least " + std::to_string(minimum));
      v = static_cast<std::size_t>(i->get());
    }
    effective_[key] = v;
    return v;
  }

  std::uint64_t seed(const std::string& key, std::uint64_t fallback) {
    std::uint64_t v = fallback;
    if (const auto* node = lookup(key)) {
      const auto* i = node->as_integer();
      if (!i || i->get() < 0) fail(key, "expected a nonnegative integer");
      v = static_cast<std::uint64_t>(i->get());
    }
    effective_[key] = v;
    return v;
  }

  double real(const std::string& key, double fallback) {
    double v = fallback;
    if (const auto* node = lookup(key)) {
      if (const auto* f = node->as_floating_point())
        v = f->get();
      else if (const auto* i = node->as_integer())
        v = static_cast<double>(i->get());
      else
        fail(key, "expected a number");
      if (!std::isfinite(v)) fail(key, "must be finite");
    }
    effective_[key] = v;
    return v;
  }

  std::optional<double> optional_real(const std::string& key) {
    if (!lookup(key)) {
      effective_[key] = nullptr;
      return std::nullopt;
    }
    return real(key, 0.0);
  }

  bool flag(const std::string& key, bool fallback) {
    bool v = fallback;
    if (const auto* node = lookup(key)) {
      const auto* b = node->as_boolean();
      if (!b) fail(key, "expected true or false");
      v = b->get();
    }
    effective_[key] = v;
    return v;
  }

  std::string text(const std::string& key, const std::string& fallback) {
    std::string v = fallback;
    if (const auto* node = lookup(key)) {
      const auto* s = node->as_string();
      if (!s) fail(key, "expected a string");
      v = s->get();
    }
    effective_[key] = v;
    return v;
  }

  std::vector<std::uint64_t> seeds(const std::string& key, std::vector<std::uint64_t> fallback) {
    auto v = integer_list(key, std::move(fallback), 0);
    if (v.empty()) fail(key, "must not be empty");
    return v;
  }

  std::vector<std::size_t> counts(const std::string& key, std::vector<std::size_t> fallback) {
    std::vector<std::uint64_t> wide(fallback.begin(), fallback.end());
    wide = integer_list(key, std::move(wide), 1);
    if (wide.empty()) fail(key, "must not be empty");
    return {wide.begin(), wide.end()};
  }

  std::vector<std::string> texts(const std::string& key, std::vector<std::string> fallback) {
    std::vector<std::string> v = std::move(fallback);
    if (const auto* node = lookup(key)) {
      const auto* arr = node->as_array();
      if (!arr) fail(key, "expected an array of strings");
      v.clear();
      for (const auto& el : *arr) {
        const auto* s = el.as_string();
        if (!s) fail(key, "expected an array of strings");
        v.push_back(s->get());
      }
    }
    effective_[key] = v;
    return v;
  }

  /// Replaces the echoed value, for flag overrides.
  template <class T>
  void override_value(const std::string& key, const T& value) {
    effective_[key] = value;
  }

  [[noreturn]] void fail(const std::string& key, const std::string& why) const {
    throw Error(ErrorKind::Config, "config field '" + qualified(key) + "': " + why);
  }

  /// Throws on keys that no reader asked for.
  void finish() const {
    if (!table_) return;
    for (const auto& [k, v] : *table_) {
      const std::string key(k.str());
      if (!seen_.count(key) && !v.is_table())
        throw Error(ErrorKind::Config, "unknown config field '" + qualified(key) + "'");
    }
  }

 private:
  const toml::node* lookup(const std::string& key) {
    seen_.insert(key);
    return table_ ? table_->get(key) : nullptr;
  }

  std::vector<std::uint64_t> integer_list(const std::string& key, std::vector<std::uint64_t> fallback,
                                          std::int64_t minimum) {
    std::vector<std::uint64_t> v = std::move(fallback);
    if (const auto* node = lookup(key)) {
      const auto* arr = node->as_array();
      if (!arr) fail(key, "expected an array of integers");
      v.clear();
      for (const auto& el : *arr) {
        const auto* i = el.as_integer();
        if (!i || i->get() < minimum) fail(key, "expected integers >= " + std::to_string(minimum));
        v.push_back(static_cast<std::uint64_t>(i->get()));
      }
    }
    effective_[key] = v;
    return v;
  }

  std::string qualified(const std::string& key) const { return name_.empty() ? key : name_ + "." + key; }

  const toml::table* table_;
  std::string name_;
  nlohmann::json& effective_;
  std::set<std::string> seen_;
};

}  // namespace mixopt::cli
