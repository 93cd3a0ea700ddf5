#include "controllers/prompts.hpp"

#include <fstream>
#include <sstream>
#include <utility>

#include <spdlog/spdlog.h>

#include "core/error.hpp"

namespace firemed::controllers {

namespace {

struct EmbeddedFile {
  std::string_view name;
  std::string_view text;
};

// Generated at configure time from assets/prompts.
constexpr EmbeddedFile kEmbedded[] = {
#include "embedded_prompts.inc"
};

std::string_view embedded(std::string_view name) {
  for (const auto& f : kEmbedded)
    if (f.name == name) return f.text;
  throw ConfigError("no built-in prompt asset " + std::string(name));
}

std::string_view trim_view(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Splits into [tag] sections; lines before the first tag are ignored.
std::vector<std::pair<std::string, std::string>> sections(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.size() > 2 && line.front() == '[' && line.back() == ']') {
      out.emplace_back(std::string(line.substr(1, line.size() - 2)), std::string{});
    } else if (!out.empty()) {
      out.back().second.append(line);
      out.back().second.push_back('\n');
    }
    pos = nl + 1;
  }
  for (auto& [tag, body] : out) body = std::string(trim_view(body));
  return out;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void require_fire(const WorldDigest& d) {
  if (!d.has_fire()) throw NoFireToTarget("no active fire to direct agents to");
}

PromptBundle build(PromptKind kind, const PromptTemplate& t,
                   const std::map<std::string, std::string, std::less<>>& values,
                   const PromptOptions& opt) {
  PromptBundle b;
  b.kind = kind;
  b.system_text = fill(t.system, values);
  b.user_text = fill(t.user, values);
  if (opt.few_shot) b.few_shot_examples = t.shots;
  return b;
}

}  // namespace

const char* to_string(PromptKind k) {
  switch (k) {
    case PromptKind::RuleBased: return "rule_based";
    case PromptKind::NaturalLanguageStrategy: return "nl_strategy";
    case PromptKind::MediatorTranslate: return "mediator_translate";
  }
  return "?";
}

const char* template_name(PromptKind k) {
  switch (k) {
    case PromptKind::RuleBased: return "rb_mediator";
    case PromptKind::NaturalLanguageStrategy: return "nl_strategy";
    case PromptKind::MediatorTranslate: return "nl_mediator";
  }
  return "?";
}

PromptTemplate parse_template(std::string_view text, std::string_view shots_text) {
  PromptTemplate t;
  bool have_user = false;
  for (auto& [tag, body] : sections(text)) {
    if (tag == "system") {
      t.system = std::move(body);
    } else if (tag == "user") {
      t.user = std::move(body);
      have_user = true;
    } else {
      throw ConfigError("unknown prompt section [" + tag + "]");
    }
  }
  if (!have_user || t.user.empty()) throw ConfigError("prompt template has no [user] text");

  std::optional<std::string> pending;
  for (auto& [tag, body] : sections(shots_text)) {
    if (tag == "input") {
      if (pending) throw ConfigError("few-shot [input] without [output]");
      pending = std::move(body);
    } else if (tag == "output") {
      if (!pending) throw ConfigError("few-shot [output] without [input]");
      t.shots.push_back({std::move(*pending), std::move(body)});
      pending.reset();
    } else {
      throw ConfigError("unknown few-shot section [" + tag + "]");
    }
  }
  if (pending) throw ConfigError("few-shot [input] without [output]");
  return t;
}

std::string fill(std::string_view text,
                 const std::map<std::string, std::string, std::less<>>& values) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '{') {
      const auto close = text.find('}', i + 1);
      if (close != std::string_view::npos) {
        const auto it = values.find(text.substr(i + 1, close - i - 1));
        if (it != values.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out.push_back(text[i++]);
  }
  return out;
}

TemplateStore::TemplateStore() = default;

TemplateStore::TemplateStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  if (!std::filesystem::is_directory(*dir_))
    throw ConfigError("prompt directory not found: " + dir_->string());
}

void TemplateStore::refresh(PromptKind kind, Entry& e) {
  const std::string base = template_name(kind);
  if (dir_) {
    const auto text_path = *dir_ / (base + ".txt");
    const auto shots_path = *dir_ / (base + ".shots.txt");
    std::error_code ec1, ec2;
    const auto t1 = std::filesystem::last_write_time(text_path, ec1);
    const auto t2 = std::filesystem::last_write_time(shots_path, ec2);
    if (!ec1) {
      if (e.from_disk && t1 == e.text_mtime && (ec2 || t2 == e.shots_mtime)) return;
      const std::string shots = ec2 ? std::string(embedded(base + ".shots.txt")) : read_file(shots_path);
      e.tmpl = parse_template(read_file(text_path), shots);
      e.text_mtime = t1;
      e.shots_mtime = ec2 ? std::filesystem::file_time_type{} : t2;
      e.from_disk = true;
      spdlog::debug("loaded prompt template {}", text_path.string());
      return;
    }
  }
  if (e.tmpl.user.empty() || e.from_disk) {
    e.tmpl = parse_template(embedded(base + ".txt"), embedded(base + ".shots.txt"));
    e.from_disk = false;
  }
}

PromptTemplate TemplateStore::get(PromptKind kind) {
  std::lock_guard lock(mu_);
  auto& e = entries_[kind];
  refresh(kind, e);
  return e.tmpl;
}

std::string truncate_at_sentence(std::string_view text, std::size_t budget) {
  if (text.size() <= budget) return std::string(text);
  const std::string_view head = text.substr(0, budget);
  std::size_t cut = std::string_view::npos;
  for (std::size_t i = head.size(); i-- > 0;) {
    const char c = head[i];
    if ((c == '.' || c == '!' || c == '?') && (i + 1 == text.size() || text[i + 1] == ' ' ||
                                               text[i + 1] == '\n')) {
      cut = i + 1;
      break;
    }
  }
  if (cut == std::string_view::npos) {
    const auto sp = head.find_last_of(" \n");
    cut = (sp == std::string_view::npos || sp == 0) ? head.size() : sp;
  }
  return std::string(trim_view(text.substr(0, cut)));
}

PromptBundle rb_build(const WorldDigest& d, TemplateStore& store, const PromptOptions& opt) {
  require_fire(d);
  return build(PromptKind::RuleBased, store.get(PromptKind::RuleBased),
               {{"all_agents_location_info", d.location_info()},
                {"all_agents_fire_info", d.fire_info()}},
               opt);
}

PromptBundle nl_build_strategy(const WorldDigest& d, TemplateStore& store,
                               const PromptOptions& opt) {
  require_fire(d);
  return build(PromptKind::NaturalLanguageStrategy,
               store.get(PromptKind::NaturalLanguageStrategy),
               {{"all_agents_location_info", d.location_info()},
                {"all_agents_fire_info", d.fire_info()}},
               opt);
}

PromptBundle nl_build_translate(std::string_view strategy, const WorldDigest& d,
                                TemplateStore& store, const PromptOptions& opt) {
  std::string text(trim_view(strategy));
  if (text.empty()) throw InputError("strategy text is empty");
  if (text.size() > opt.strategy_budget) {
    const auto before = text.size();
    text = truncate_at_sentence(text, opt.strategy_budget);
    spdlog::info("strategy truncated from {} to {} bytes", before, text.size());
  }
  return build(PromptKind::MediatorTranslate, store.get(PromptKind::MediatorTranslate),
               {{"all_agents_location_info", d.location_info()},
                {"all_agents_fire_info", d.fire_info()},
                {"strategy", text}},
               opt);
}

}  // namespace firemed::controllers
