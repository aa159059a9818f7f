#include "rgcd/config.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <variant>

#include "rgcd/error.hpp"

namespace rgcd {

namespace {

static_assert(std::is_same_v<std::size_t, std::uint64_t>, "seed shares the integer slot");
using Slot = std::variant<double*, std::size_t*, std::string*>;

struct Field {
  const char* key;
  Slot slot;
};

std::vector<Field> fields(RunConfig& c) {
  return {
      {"seed", &c.seed},
      {"output_dir", &c.output_dir},
      {"schedule.rate_min", &c.schedule.rate_min},
      {"schedule.rate_max", &c.schedule.rate_max},
      {"schedule.horizon", &c.schedule.horizon},
      {"schedule.epsilon", &c.schedule.epsilon},
      {"grid.size", &c.schedule.grid_size},
      {"data.classes", &c.data.classes},
      {"data.embed_dim", &c.data.embed_dim},
      {"data.frames", &c.data.frames},
      {"data.dim", &c.data.dim},
      {"data.spread", &c.data.spread},
      {"data.amplitude", &c.data.amplitude},
      {"data.embed_jitter", &c.data.embed_jitter},
      {"data.train_prompts", &c.data.train_prompts},
      {"data.heldout_prompts", &c.data.heldout_prompts},
      {"codec.kind", &c.codec.kind},
      {"codec.pixels", &c.codec.pixels},
      {"reward.frame_kind", &c.reward.frame_kind},
      {"reward.frames_sampled", &c.reward.frames_sampled},
      {"reward.beta_img", &c.reward.beta_img},
      {"reward.beta_vid", &c.reward.beta_vid},
      {"reward.velocity_weight", &c.reward.velocity_weight},
      {"reward.target_offset", &c.reward.target_offset},
      {"reward.cosine_eta", &c.reward.cosine_eta},
      {"teacher.kind", &c.teacher.kind},
      {"teacher.hidden", &c.teacher.hidden},
      {"teacher.steps", &c.teacher.steps},
      {"teacher.batch", &c.teacher.batch},
      {"teacher.learning_rate", &c.teacher.learning_rate},
      {"student.hidden", &c.student.hidden},
      {"student.lora_rank", &c.student.lora_rank},
      {"student.lora_scale", &c.student.lora_scale},
      {"student.head_scale", &c.student.head_scale},
      {"student.sigma_data", &c.student.sigma_data},
      {"student.input_scale", &c.student.input_scale},
      {"train.skip", &c.train.skip},
      {"train.omega_min", &c.train.omega_min},
      {"train.omega_max", &c.train.omega_max},
      {"train.learning_rate", &c.train.learning_rate},
      {"train.optimizer", &c.train.optimizer},
      {"train.adam_beta1", &c.train.adam_beta1},
      {"train.adam_beta2", &c.train.adam_beta2},
      {"train.adam_eps", &c.train.adam_eps},
      {"train.ema_rate", &c.train.ema_rate},
      {"train.steps", &c.train.steps},
      {"train.batch", &c.train.batch},
      {"train.distance", &c.train.distance},
      {"train.huber_scale", &c.train.huber_scale},
      {"train.checkpoint_every", &c.train.checkpoint_every},
      {"train.probe_every", &c.train.probe_every},
      {"eval.samples_per_prompt", &c.eval.samples_per_prompt},
      {"eval.student_steps", &c.eval.student_steps},
      {"eval.teacher_steps", &c.eval.teacher_steps},
      {"eval.omega", &c.eval.omega},
      {"eval.prompts", &c.eval.prompts},
      {"eval.threads", &c.eval.threads},
      {"eval.tie_delta", &c.eval.tie_delta},
  };
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Returns an error message, or empty on success.
std::string assign(const Slot& slot, const std::string& text) {
  if (text.empty()) return "empty value";
  return std::visit(
      [&](auto* p) -> std::string {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, std::string>) {
          if (text.find_first_of(" \t") != std::string::npos) return "string values may not contain spaces";
          *p = text;
          return "";
        } else if constexpr (std::is_same_v<T, double>) {
          char* end = nullptr;
          errno = 0;
          const double v = std::strtod(text.c_str(), &end);
          if (*end != '\0' || errno == ERANGE || !std::isfinite(v)) return "expected a finite real, got '" + text + "'";
          *p = v;
          return "";
        } else {
          if (text.front() == '-' || text.front() == '+') return "expected a non-negative integer, got '" + text + "'";
          char* end = nullptr;
          errno = 0;
          const unsigned long long v = std::strtoull(text.c_str(), &end, 10);
          if (*end != '\0' || errno == ERANGE) return "expected a non-negative integer, got '" + text + "'";
          *p = static_cast<T>(v);
          return "";
        }
      },
      slot);
}

std::string format_value(const Slot& slot) {
  return std::visit(
      [](auto* p) -> std::string {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, std::string>) {
          return *p;
        } else if constexpr (std::is_same_v<T, double>) {
          char buf[64];
          std::snprintf(buf, sizeof buf, "%.17g", *p);
          return buf;
        } else {
          return std::to_string(*p);
        }
      },
      slot);
}

const Field* find(const std::vector<Field>& fs, const std::string& key) {
  for (const auto& f : fs) {
    if (key == f.key) return &f;
  }
  return nullptr;
}

}  // namespace

std::vector<std::string> validate(const RunConfig& c) {
  std::vector<std::string> bad;
  auto need = [&](bool ok, const std::string& msg) {
    if (!ok) bad.push_back(msg);
  };
  const auto& s = c.schedule;
  need(s.rate_min >= 0.0, "schedule.rate_min must be >= 0");
  need(s.rate_max > s.rate_min, "schedule.rate_max must exceed schedule.rate_min");
  need(s.horizon > 0.0, "schedule.horizon must be > 0");
  need(s.epsilon > 0.0 && s.epsilon < s.horizon, "schedule.epsilon must lie in (0, horizon)");
  need(c.train.skip >= 1, "train.skip (k) must be >= 1");
  need(s.grid_size >= c.train.skip + 2,
       "grid.size N = " + std::to_string(s.grid_size) + " must satisfy N >= k + 2 (k = " +
           std::to_string(c.train.skip) + ")");

  const auto& d = c.data;
  need(d.classes >= 1, "data.classes must be >= 1");
  need(d.embed_dim >= 1, "data.embed_dim must be >= 1");
  need(d.frames >= 2, "data.frames must be >= 2");
  need(d.dim >= 1, "data.dim must be >= 1");
  need(d.spread >= 0.0, "data.spread must be >= 0");
  need(d.amplitude >= 0.0, "data.amplitude must be >= 0");
  need(d.embed_jitter >= 0.0, "data.embed_jitter must be >= 0");
  need(d.train_prompts >= 1, "data.train_prompts must be >= 1");
  need(d.heldout_prompts >= 1, "data.heldout_prompts must be >= 1");

  if (c.codec.kind == "linear") {
    need(c.codec.pixels >= d.dim, "codec.pixels must be >= data.dim for a left-invertible codec");
  } else if (c.codec.kind == "identity") {
    need(c.codec.pixels == d.dim, "codec.pixels must equal data.dim for the identity codec");
  } else {
    bad.push_back("codec.kind must be identity or linear, got '" + c.codec.kind + "'");
  }

  const auto& r = c.reward;
  need(r.frame_kind == "neg_sq_distance" || r.frame_kind == "cosine",
       "reward.frame_kind must be neg_sq_distance or cosine");
  need(r.frames_sampled >= 1 && r.frames_sampled <= d.frames,
       "reward.frames_sampled M = " + std::to_string(r.frames_sampled) + " must satisfy 1 <= M <= F = " +
           std::to_string(d.frames));
  need(r.beta_img >= 0.0, "reward.beta_img must be >= 0");
  need(r.beta_vid >= 0.0, "reward.beta_vid must be >= 0");
  need(r.velocity_weight > 0.0, "reward.velocity_weight must be > 0");
  need(r.target_offset >= 0.0, "reward.target_offset must be >= 0");
  need(r.cosine_eta > 0.0, "reward.cosine_eta must be > 0");

  const auto& te = c.teacher;
  need(te.kind == "analytic" || te.kind == "neural", "teacher.kind must be analytic or neural");
  need(te.hidden >= 1, "teacher.hidden must be >= 1");
  need(te.batch >= 1, "teacher.batch must be >= 1");
  need(te.learning_rate > 0.0, "teacher.learning_rate must be > 0");
  if (te.kind == "neural") {
    need(te.hidden == c.student.hidden, "teacher.hidden must equal student.hidden for a neural teacher");
  }

  const auto& st = c.student;
  need(st.hidden >= 1, "student.hidden must be >= 1");
  need(st.lora_rank >= 1, "student.lora_rank must be >= 1");
  need(st.head_scale >= 0.0, "student.head_scale must be >= 0");
  need(st.sigma_data > 0.0, "student.sigma_data must be > 0");
  need(st.input_scale > 0.0, "student.input_scale must be > 0");

  const auto& t = c.train;
  need(t.omega_min >= 0.0 && t.omega_min <= t.omega_max,
       "guidance range must satisfy 0 <= train.omega_min <= train.omega_max");
  need(t.learning_rate > 0.0, "train.learning_rate must be > 0");
  need(t.optimizer == "adam" || t.optimizer == "sgd", "train.optimizer must be adam or sgd");
  need(t.adam_beta1 >= 0.0 && t.adam_beta1 < 1.0, "train.adam_beta1 must lie in [0, 1)");
  need(t.adam_beta2 >= 0.0 && t.adam_beta2 < 1.0, "train.adam_beta2 must lie in [0, 1)");
  need(t.adam_eps > 0.0, "train.adam_eps must be > 0");
  need(t.ema_rate >= 0.0 && t.ema_rate <= 1.0, "train.ema_rate must lie in [0, 1]");
  need(t.steps >= 1, "train.steps must be >= 1");
  need(t.batch >= 1, "train.batch must be >= 1");
  need(t.distance == "pseudo_huber" || t.distance == "l2_squared",
       "train.distance must be pseudo_huber or l2_squared");
  need(t.huber_scale > 0.0, "train.huber_scale must be > 0");

  const auto& e = c.eval;
  need(e.samples_per_prompt >= 1, "eval.samples_per_prompt must be >= 1");
  need(e.student_steps >= 1, "eval.student_steps must be >= 1");
  need(e.teacher_steps >= 1, "eval.teacher_steps must be >= 1");
  need(e.omega >= t.omega_min && e.omega <= t.omega_max,
       "eval.omega must lie in [train.omega_min, train.omega_max]");
  need(e.prompts >= 1 && e.prompts <= d.heldout_prompts,
       "eval.prompts must lie in [1, data.heldout_prompts]");
  need(e.threads >= 1, "eval.threads must be >= 1");
  need(e.tie_delta >= 0.0, "eval.tie_delta must be >= 0");

  need(!c.output_dir.empty(), "output_dir must not be empty");
  return bad;
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig config;
  auto fs = fields(config);
  std::vector<std::string> bad;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(lineno) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      bad.push_back(where + "expected 'key = value'");
      continue;
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const Field* f = find(fs, key);
    if (!f) {
      bad.push_back(where + "unknown key '" + key + "'");
      continue;
    }
    if (!seen.insert(key).second) {
      bad.push_back(where + "duplicate key '" + key + "'");
      continue;
    }
    if (auto err = assign(f->slot, value); !err.empty()) bad.push_back(where + key + ": " + err);
  }
  for (auto& v : validate(config)) bad.push_back(std::move(v));
  if (!bad.empty()) throw ConfigError(std::move(bad));
  return config;
}

RunConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

void apply_override(RunConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError({"override '" + assignment + "' is not key=value"});
  const std::string key = trim(assignment.substr(0, eq));
  auto fs = fields(config);
  const Field* f = find(fs, key);
  if (!f) throw ConfigError({"unknown key '" + key + "'"});
  if (auto err = assign(f->slot, trim(assignment.substr(eq + 1))); !err.empty()) {
    throw ConfigError({key + ": " + err});
  }
}

std::string serialize_config(const RunConfig& config) {
  RunConfig copy = config;
  std::string out;
  for (const auto& f : fields(copy)) {
    out += f.key;
    out += " = ";
    out += format_value(f.slot);
    out += '\n';
  }
  return out;
}

std::vector<std::string> config_keys() {
  RunConfig c;
  std::vector<std::string> keys;
  for (const auto& f : fields(c)) keys.emplace_back(f.key);
  return keys;
}

}  // namespace rgcd
