#include "rfggd/config.hpp"

#include <Eigen/Cholesky>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

namespace rfggd::config {

using nlohmann::json;

const char* to_string(Command c) {
  switch (c) {
    case Command::CarGrid: return "car-grid";
    case Command::CarRfggd: return "car-rfggd";
    case Command::Follow: return "follow";
  }
  return "unknown";
}

namespace {

// Maps JSON pointers to the source line of their key (or value, for array
// elements) so that validation errors can point into the file. Assumes the
// text already parsed successfully.
class Locator {
 public:
  explicit Locator(std::string_view text) : s_(text) {
    value("");
  }

  int line(const std::string& pointer) const {
    for (std::string p = pointer;; p = p.substr(0, p.rfind('/'))) {
      if (auto it = lines_.find(p); it != lines_.end()) return it->second;
      if (p.empty()) return 1;
    }
  }

 private:
  void ws() {
    while (i_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[i_]))) advance();
  }
  void advance() {
    if (s_[i_] == '\n') ++line_;
    ++i_;
  }
  std::string string() {
    std::string out;
    advance();  // opening quote
    while (i_ < s_.size() && s_[i_] != '"') {
      if (s_[i_] == '\\') advance();
      out += s_[i_];
      advance();
    }
    if (i_ < s_.size()) advance();
    return out;
  }
  void value(const std::string& path) {
    ws();
    if (i_ >= s_.size()) return;
    lines_.try_emplace(path, line_);
    const char c = s_[i_];
    if (c == '{') {
      advance();
      ws();
      while (i_ < s_.size() && s_[i_] != '}') {
        ws();
        const int key_line = line_;
        const std::string key = string();
        lines_.try_emplace(path + "/" + key, key_line);
        ws();
        advance();  // ':'
        value(path + "/" + key);
        ws();
        if (i_ < s_.size() && s_[i_] == ',') advance();
        ws();
      }
      if (i_ < s_.size()) advance();
    } else if (c == '[') {
      advance();
      ws();
      for (int k = 0; i_ < s_.size() && s_[i_] != ']'; ++k) {
        value(path + "/" + std::to_string(k));
        ws();
        if (i_ < s_.size() && s_[i_] == ',') advance();
        ws();
      }
      if (i_ < s_.size()) advance();
    } else if (c == '"') {
      string();
    } else {
      while (i_ < s_.size() && s_[i_] != ',' && s_[i_] != '}' && s_[i_] != ']' &&
             !std::isspace(static_cast<unsigned char>(s_[i_])))
        advance();
    }
  }

  std::string_view s_;
  std::size_t i_ = 0;
  int line_ = 1;
  std::map<std::string, int> lines_;
};

struct Ctx {
  std::string_view source;
  const Locator& loc;

  [[noreturn]] void fail(const std::string& path, const std::string& why) const {
    std::ostringstream os;
    os << source << ':' << loc.line(path) << ": " << (path.empty() ? "/" : path) << ": " << why;
    throw ConfigError(os.str());
  }
  void check(bool ok, const std::string& path, const std::string& why) const {
    if (!ok) fail(path, why);
  }
};

// View of one JSON object that rejects keys outside `allowed`.
class Section {
 public:
  Section(const Ctx& ctx, const json& j, std::string path, std::initializer_list<std::string_view> allowed)
      : ctx_(ctx), j_(j), path_(std::move(path)) {
    ctx_.check(j_.is_object(), path_, "expected an object");
    for (const auto& [key, _] : j_.items()) {
      bool known = false;
      for (auto a : allowed) known = known || key == a;
      if (!known) ctx_.fail(at(key), "unknown key");
    }
  }

  std::string at(std::string_view key) const { return path_ + "/" + std::string(key); }
  const json* find(std::string_view key) const {
    auto it = j_.find(std::string(key));
    return it == j_.end() ? nullptr : &*it;
  }
  const Ctx& ctx() const { return ctx_; }

  void number(std::string_view key, double& out) const {
    if (const json* v = find(key)) {
      ctx_.check(v->is_number(), at(key), "expected a number");
      out = v->get<double>();
      ctx_.check(std::isfinite(out), at(key), "must be finite");
    }
  }
  template <class Int>
  void integer(std::string_view key, Int& out) const {
    if (const json* v = find(key)) {
      ctx_.check(v->is_number_integer(), at(key), "expected an integer");
      out = v->get<Int>();
    }
  }
  void boolean(std::string_view key, bool& out) const {
    if (const json* v = find(key)) {
      ctx_.check(v->is_boolean(), at(key), "expected true or false");
      out = v->get<bool>();
    }
  }
  void text(std::string_view key, std::string& out) const {
    if (const json* v = find(key)) {
      ctx_.check(v->is_string(), at(key), "expected a string");
      out = v->get<std::string>();
    }
  }
  void vector(std::string_view key, Vec& out, Index size) const {
    if (const json* v = find(key)) {
      ctx_.check(v->is_array() && static_cast<Index>(v->size()) == size, at(key),
                 "expected an array of " + std::to_string(size) + " numbers");
      for (Index i = 0; i < size; ++i) {
        const json& e = (*v)[static_cast<std::size_t>(i)];
        ctx_.check(e.is_number(), at(key) + "/" + std::to_string(i), "expected a number");
        out(i) = e.get<double>();
      }
    }
  }

 private:
  const Ctx& ctx_;
  const json& j_;
  std::string path_;
};

void read_rfggd(const Section& s, update::RfggdConfig& r) {
  s.number("learning_rate", r.learning_rate);
  s.number("trust_radius", r.trust_radius);
  s.number("regularization", r.regularization);
  s.integer("max_case2_iters", r.max_case2_iters);
  s.integer("max_backtracks", r.max_backtracks);
  s.integer("lookahead", r.lookahead);
  s.number("rate_min", r.box.rate_min);
  s.number("rate_max", r.box.rate_max);
  const Ctx& c = s.ctx();
  c.check(r.learning_rate >= 0.0, s.at("learning_rate"), "must be >= 0");
  c.check(r.trust_radius > 0.0, s.at("trust_radius"), "must be > 0");
  c.check(r.regularization >= 0.0, s.at("regularization"), "must be >= 0");
  c.check(r.max_case2_iters >= 1, s.at("max_case2_iters"), "must be >= 1");
  c.check(r.max_backtracks >= 0, s.at("max_backtracks"), "must be >= 0");
  c.check(r.lookahead >= 1, s.at("lookahead"), "must be >= 1");
  c.check(r.box.rate_min > 0.0, s.at("rate_min"), "must be > 0");
  c.check(r.box.rate_max > r.box.rate_min, s.at("rate_max"), "must exceed rate_min");
}

void read_range(const Section& parent, std::string_view key, experiments::Range& r) {
  const json* j = parent.find(key);
  if (!j) return;
  Section s(parent.ctx(), *j, parent.at(key), {"min", "max", "count"});
  s.number("min", r.min);
  s.number("max", r.max);
  s.integer("count", r.count);
  s.ctx().check(r.count >= 2, s.at("count"), "must be >= 2");
  s.ctx().check(r.min <= r.max, s.at("max"), "must be >= min");
}

void read_unicycle(const Section& s, plant::UnicycleConfig& u) {
  s.number("s_min", u.s_min);
  s.number("s_max", u.s_max);
  s.number("s_d", u.s_d);
  double gamma_deg = 30.0;
  if (s.find("gamma_deg")) {
    s.number("gamma_deg", gamma_deg);
    u.gamma = gamma_deg * std::numbers::pi / 180.0;
  }
  s.number("dt", u.dt);
  s.number("slack_weight", u.slack_weight);
  s.number("kappa", u.kappa);
  if (const json* p = s.find("input_cost")) {
    const std::string path = s.at("input_cost");
    s.ctx().check(p->is_array() && p->size() == 2, path, "expected a 2x2 array");
    for (std::size_t i = 0; i < 2; ++i) {
      const json& row = (*p)[i];
      s.ctx().check(row.is_array() && row.size() == 2, path + "/" + std::to_string(i), "expected 2 numbers");
      for (std::size_t k = 0; k < 2; ++k) {
        s.ctx().check(row[k].is_number(), path + "/" + std::to_string(i) + "/" + std::to_string(k),
                      "expected a number");
        u.input_cost(static_cast<Index>(i), static_cast<Index>(k)) = row[k].get<double>();
      }
    }
  }
  if (const json* l = s.find("leader")) {
    Section ls(s.ctx(), *l, s.at("leader"), {"initial_position", "speed_x", "amplitude_y", "angular_frequency"});
    Vec p0 = u.leader.initial_position;
    ls.vector("initial_position", p0, 2);
    u.leader.initial_position = p0;
    ls.number("speed_x", u.leader.speed_x);
    ls.number("amplitude_y", u.leader.amplitude_y);
    ls.number("angular_frequency", u.leader.angular_frequency);
  }
  const Ctx& c = s.ctx();
  c.check(u.s_min > 0.0, s.at("s_min"), "must be > 0");
  c.check(u.s_d > u.s_min, s.at("s_d"), "must exceed s_min");
  c.check(u.s_max > u.s_d, s.at("s_max"), "must exceed s_d");
  c.check(gamma_deg > 0.0 && gamma_deg < 90.0, s.at("gamma_deg"), "must lie in (0, 90)");
  c.check(u.dt > 0.0, s.at("dt"), "must be > 0");
  c.check(u.slack_weight > 0.0, s.at("slack_weight"), "must be > 0");
  c.check(u.kappa > 0.0, s.at("kappa"), "must be > 0");
  const Mat sym = 0.5 * (u.input_cost + u.input_cost.transpose());
  c.check(u.input_cost.isApprox(u.input_cost.transpose()) && sym.llt().info() == Eigen::Success, s.at("input_cost"),
          "must be symmetric positive definite");
}

}  // namespace

RunConfig parse(std::string_view text, std::string_view source) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    // Translate the byte offset into line:column.
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    std::ostringstream os;
    os << source << ':' << line << ':' << col << ": JSON syntax error";
    const std::string what = e.what();
    if (auto pos = what.rfind(": "); pos != std::string::npos) os << ": " << what.substr(pos + 2);
    throw ConfigError(os.str());
  }

  const Locator loc(text);
  const Ctx ctx{source, loc};
  RunConfig cfg;
  Section root(ctx, doc, "",
               {"schema_version", "model", "seed", "output_dir", "car", "unicycle", "rfggd", "car_grid", "car_rfggd",
                "follow"});
  ctx.check(root.find("schema_version") != nullptr, "/schema_version", "missing (expected " +
                                                                          std::to_string(kSchemaVersion) + ")");
  root.integer("schema_version", cfg.schema_version);
  ctx.check(cfg.schema_version == kSchemaVersion, "/schema_version",
            "unsupported version " + std::to_string(cfg.schema_version));
  root.text("model", cfg.model);
  ctx.check(cfg.model.empty() || cfg.model == "car" || cfg.model == "unicycle", "/model",
            "must be \"car\" or \"unicycle\"");
  if (const json* s = root.find("seed")) {
    ctx.check(s->is_number_unsigned() || (s->is_number_integer() && s->get<std::int64_t>() >= 0), "/seed",
              "expected a non-negative integer");
    cfg.seed = s->get<std::uint64_t>();
  }
  std::string out = cfg.output_dir.string();
  root.text("output_dir", out);
  ctx.check(!out.empty(), "/output_dir", "must not be empty");
  cfg.output_dir = out;

  if (const json* j = root.find("car")) {
    Section s(ctx, *j, "/car", {"c", "dt"});
    s.number("c", cfg.car_c);
    s.number("dt", cfg.car_dt);
    ctx.check(cfg.car_c < 1.0, "/car/c", "must be < 1 (the safe set has to shrink)");
    ctx.check(cfg.car_dt > 0.0, "/car/dt", "must be > 0");
  }
  if (const json* j = root.find("unicycle"))
    read_unicycle(Section(ctx, *j, "/unicycle",
                          {"s_min", "s_max", "s_d", "gamma_deg", "dt", "slack_weight", "kappa", "input_cost", "leader"}),
                  cfg.follow.model);
  if (const json* j = root.find("rfggd"))
    read_rfggd(Section(ctx, *j, "/rfggd",
                       {"learning_rate", "trust_radius", "regularization", "max_case2_iters", "max_backtracks",
                        "lookahead", "rate_min", "rate_max"}),
               cfg.rfggd);
  if (const json* j = root.find("car_grid")) {
    Section s(ctx, *j, "/car_grid", {"a", "b", "x0", "t0", "horizon_cap", "svg"});
    read_range(s, "a", cfg.grid.a_range);
    read_range(s, "b", cfg.grid.b_range);
    s.number("x0", cfg.grid.x0);
    s.number("t0", cfg.grid.t0);
    s.integer("horizon_cap", cfg.grid.horizon_cap);
    s.boolean("svg", cfg.grid_svg);
    ctx.check(cfg.grid.horizon_cap >= 1, "/car_grid/horizon_cap", "must be >= 1");
  }
  if (const json* j = root.find("car_rfggd")) {
    Section s(ctx, *j, "/car_rfggd", {"x0", "t0", "horizon_cap", "max_iters", "inits", "random_inits"});
    s.number("x0", cfg.study.x0);
    s.number("t0", cfg.study.t0);
    s.integer("horizon_cap", cfg.study.horizon_cap);
    s.integer("max_iters", cfg.study.max_iters);
    s.integer("random_inits", cfg.random_inits);
    ctx.check(cfg.study.horizon_cap >= 1, "/car_rfggd/horizon_cap", "must be >= 1");
    ctx.check(cfg.study.max_iters >= 1, "/car_rfggd/max_iters", "must be >= 1");
    ctx.check(cfg.random_inits >= 0, "/car_rfggd/random_inits", "must be >= 0");
    if (const json* in = s.find("inits")) {
      ctx.check(in->is_array(), "/car_rfggd/inits", "expected an array of [a, b] pairs");
      cfg.study.inits.clear();
      for (std::size_t k = 0; k < in->size(); ++k) {
        const std::string path = "/car_rfggd/inits/" + std::to_string(k);
        const json& e = (*in)[k];
        ctx.check(e.is_array() && e.size() == 2 && e[0].is_number() && e[1].is_number(), path,
                  "expected [a, b]");
        cfg.study.inits.emplace_back(e[0].get<double>(), e[1].get<double>());
      }
    }
  }
  if (const json* j = root.find("follow")) {
    Section s(ctx, *j, "/follow", {"sim_steps", "initial_state", "theta0"});
    s.integer("sim_steps", cfg.follow.sim_steps);
    s.vector("initial_state", cfg.follow.initial_state, 3);
    s.number("theta0", cfg.follow.theta0);
    ctx.check(cfg.follow.sim_steps >= 1, "/follow/sim_steps", "must be >= 1");
  }
  return cfg;
}

RunConfig load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string() + ": cannot open config file");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.string());
}

void prepare(RunConfig& cfg, Command cmd) {
  const bool wants_car = cmd != Command::Follow;
  const char* needed = wants_car ? "car" : "unicycle";
  if (!cfg.model.empty() && cfg.model != needed)
    throw ConfigError("/model: command " + std::string(to_string(cmd)) + " needs model \"" + needed + "\"");
  const ParamBox& box = cfg.rfggd.box;
  auto in_box = [&](double v) { return v >= box.rate_min && v <= box.rate_max; };

  switch (cmd) {
    case Command::CarGrid: {
      cfg.grid.c = cfg.car_c;
      cfg.grid.dt = cfg.car_dt;
      for (auto [name, r] : {std::pair{"a", &cfg.grid.a_range}, std::pair{"b", &cfg.grid.b_range}})
        if (!in_box(r->min) || !in_box(r->max))
          throw ConfigError(std::string("/car_grid/") + name + ": range must lie within [rfggd.rate_min, rfggd.rate_max]");
      break;
    }
    case Command::CarRfggd: {
      cfg.study.c = cfg.car_c;
      cfg.study.dt = cfg.car_dt;
      for (std::size_t k = 0; k < cfg.study.inits.size(); ++k) {
        const auto [a, b] = cfg.study.inits[k];
        if (!in_box(a) || !in_box(b))
          throw ConfigError("/car_rfggd/inits/" + std::to_string(k) + ": must lie within [rfggd.rate_min, rfggd.rate_max]");
      }
      // Log-uniform draws so that small rates, where feasibility is
      // decided, are sampled as often as large ones.
      std::mt19937_64 rng(cfg.seed);
      const double lo = std::log(box.rate_min);
      const double hi = std::log(box.rate_max);
      auto draw = [&] {
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        return std::exp(lo + u * (hi - lo));
      };
      for (int k = 0; k < cfg.random_inits; ++k) {
        const double a = draw();
        const double b = draw();
        cfg.study.inits.emplace_back(a, b);
      }
      if (cfg.study.inits.empty()) throw ConfigError("/car_rfggd/inits: at least one initial point is required");
      break;
    }
    case Command::Follow:
      if (!in_box(cfg.follow.theta0))
        throw ConfigError("/follow/theta0: must lie within [rfggd.rate_min, rfggd.rate_max]");
      break;
  }
}

}  // namespace rfggd::config
