#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "controllers/digest.hpp"

namespace firemed::controllers {

enum class PromptKind { RuleBased, NaturalLanguageStrategy, MediatorTranslate };

const char* to_string(PromptKind k);
// Asset base name, e.g. "rb_mediator".
const char* template_name(PromptKind k);

struct Shot {
  std::string input;
  std::string output;
  bool operator==(const Shot&) const = default;
};

struct PromptBundle {
  std::string system_text;
  std::string user_text;
  std::vector<Shot> few_shot_examples;
  PromptKind kind = PromptKind::RuleBased;
  bool operator==(const PromptBundle&) const = default;
};

struct PromptTemplate {
  std::string system;
  std::string user;
  std::vector<Shot> shots;
};

// Template text: leading '#' lines are comments, then "[system]" and "[user]"
// sections. Shot text: repeated "[input]" / "[output]" pairs.
PromptTemplate parse_template(std::string_view text, std::string_view shots_text);

// Replaces {name} placeholders in one pass; substituted text is not rescanned
// and unknown braces are copied through.
std::string fill(std::string_view text, const std::map<std::string, std::string, std::less<>>& values);

// Holds the three templates. Built-in copies are compiled in; when a directory
// is given, files there take precedence and are re-read whenever their
// modification time changes.
class TemplateStore {
 public:
  TemplateStore();
  explicit TemplateStore(std::filesystem::path dir);

  PromptTemplate get(PromptKind kind);
  const std::optional<std::filesystem::path>& directory() const { return dir_; }

 private:
  struct Entry {
    PromptTemplate tmpl;
    std::filesystem::file_time_type text_mtime{};
    std::filesystem::file_time_type shots_mtime{};
    bool from_disk = false;
  };

  void refresh(PromptKind kind, Entry& e);

  std::optional<std::filesystem::path> dir_;
  std::mutex mu_;
  std::map<PromptKind, Entry> entries_;
};

struct PromptOptions {
  bool few_shot = true;
  // Longest strategy text embedded in the mediator prompt, in bytes.
  std::size_t strategy_budget = 1500;
};

// These throw NoFireToTarget when the digest reports no fire.
PromptBundle rb_build(const WorldDigest& d, TemplateStore& store, const PromptOptions& opt = {});
PromptBundle nl_build_strategy(const WorldDigest& d, TemplateStore& store,
                               const PromptOptions& opt = {});
// Throws InputError on an empty (all-whitespace) strategy.
PromptBundle nl_build_translate(std::string_view strategy, const WorldDigest& d,
                                TemplateStore& store, const PromptOptions& opt = {});

// Cuts text longer than `budget` after the last sentence end that fits, or at
// the last space when no sentence ends in range.
std::string truncate_at_sentence(std::string_view text, std::size_t budget);

}  // namespace firemed::controllers
