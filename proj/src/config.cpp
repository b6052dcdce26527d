#include "gctrl/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "gctrl/errors.hpp"

namespace gctrl {

ConfigError::ConfigError(const std::string& message, std::size_t line, std::size_t column)
    : std::runtime_error(line == 0 ? message : fmt::format("{}:{}: {}", line, column, message)),
      line_(line),
      column_(column) {}

const char* to_string(Payoff p) noexcept {
    switch (p) {
        case Payoff::kSquare: return "square";
        case Payoff::kNegSquare: return "neg_square";
        case Payoff::kConstant: return "constant";
    }
    return "unknown";
}

const char* to_string(AttitudeChoice a) noexcept {
    switch (a) {
        case AttitudeChoice::kPessimist: return "pessimist";
        case AttitudeChoice::kOptimist: return "optimist";
        case AttitudeChoice::kBoth: return "both";
    }
    return "unknown";
}

namespace {

// A value with the position of its first character.
struct Token {
    std::string_view text;
    std::size_t line = 0;
    std::size_t column = 0;

    [[noreturn]] void fail(const std::string& message) const {
        throw ConfigError(message, line, column);
    }
};

std::string_view trim(std::string_view s, std::size_t* lead = nullptr) {
    std::size_t b = 0;
    while (b < s.size() && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
    std::size_t e = s.size();
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
    if (lead != nullptr) *lead = b;
    return s.substr(b, e - b);
}

std::vector<Token> split(const Token& tok, char sep) {
    std::vector<Token> parts;
    std::size_t start = 0;
    for (;;) {
        const std::size_t end = tok.text.find(sep, start);
        const std::string_view raw =
            tok.text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
        std::size_t lead = 0;
        const std::string_view body = trim(raw, &lead);
        parts.push_back({body, tok.line, tok.column + start + lead});
        if (end == std::string_view::npos) break;
        start = end + 1;
    }
    return parts;
}

double parse_real(const Token& tok) {
    double v = 0.0;
    const char* first = tok.text.data();
    const char* last = first + tok.text.size();
    if (!tok.text.empty() && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (tok.text.empty() || ec != std::errc() || ptr != last) {
        tok.fail(fmt::format("expected a real number, got '{}'", tok.text));
    }
    if (!std::isfinite(v)) tok.fail(fmt::format("'{}' is not finite", tok.text));
    return v;
}

std::uint64_t parse_u64(const Token& tok) {
    std::uint64_t v = 0;
    const char* first = tok.text.data();
    const char* last = first + tok.text.size();
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (tok.text.empty() || ec != std::errc() || ptr != last) {
        tok.fail(fmt::format("expected a non-negative integer, got '{}'", tok.text));
    }
    return v;
}

std::size_t parse_size(const Token& tok) { return static_cast<std::size_t>(parse_u64(tok)); }

std::vector<double> parse_reals(const Token& tok) {
    std::vector<double> out;
    for (const Token& t : split(tok, ',')) out.push_back(parse_real(t));
    return out;
}

template <typename Enum>
Enum parse_enum(const Token& tok, std::initializer_list<std::pair<const char*, Enum>> options) {
    std::string allowed;
    for (const auto& [name, value] : options) {
        if (tok.text == name) return value;
        allowed += allowed.empty() ? name : fmt::format("|{}", name);
    }
    tok.fail(fmt::format("expected one of {}, got '{}'", allowed, tok.text));
}

std::string join_reals(const std::vector<double>& v, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i > 0) out += sep;
        out += fmt::format("{}", v[i]);
    }
    return out;
}

std::string real(double v) { return fmt::format("{}", v); }

const char* direction_name(Direction d) { return d == Direction::kUpper ? "upper" : "lower"; }
const char* opt_name(OptDirection d) { return d == OptDirection::kMinimize ? "minimize" : "maximize"; }

Direction parse_direction(const Token& t) {
    return parse_enum<Direction>(t, {{"upper", Direction::kUpper}, {"lower", Direction::kLower}});
}

struct Field {
    std::function<void(RunConfig&, const Token&)> parse;
    std::function<std::string(const RunConfig&)> emit;
};

using FieldTable = std::vector<std::pair<std::string, std::vector<std::pair<std::string, Field>>>>;

#define GCTRL_REAL(sec, key) \
    {#key, {[](RunConfig& c, const Token& t) { c.sec.key = parse_real(t); }, [](const RunConfig& c) { return real(c.sec.key); }}}
#define GCTRL_SIZE(sec, key) \
    {#key, {[](RunConfig& c, const Token& t) { c.sec.key = parse_size(t); }, [](const RunConfig& c) { return fmt::format("{}", c.sec.key); }}}

const FieldTable& fields() {
    static const FieldTable table = {
        {"ambiguity",
         {GCTRL_SIZE(ambiguity, d), GCTRL_REAL(ambiguity, sigma_lo_sq), GCTRL_REAL(ambiguity, sigma_hi_sq)}},
        {"market",
         {{"breakpoints",
           {[](RunConfig& c, const Token& t) { c.market.breakpoints = parse_reals(t); },
            [](const RunConfig& c) { return join_reals(c.market.breakpoints, ", "); }}},
          {"r",
           {[](RunConfig& c, const Token& t) {
                c.market.r.clear();
                for (const Token& seg : split(t, '|')) c.market.r.push_back(parse_real(seg));
            },
            [](const RunConfig& c) { return join_reals(c.market.r, " | "); }}},
          {"alpha",
           {[](RunConfig& c, const Token& t) {
                c.market.alpha.clear();
                for (const Token& seg : split(t, '|')) c.market.alpha.push_back(parse_reals(seg));
            },
            [](const RunConfig& c) {
                std::string out;
                for (std::size_t s = 0; s < c.market.alpha.size(); ++s) {
                    if (s > 0) out += " | ";
                    out += join_reals(c.market.alpha[s], ", ");
                }
                return out;
            }}},
          {"gamma",
           {[](RunConfig& c, const Token& t) {
                c.market.gamma.clear();
                for (const Token& seg : split(t, '|')) {
                    std::vector<std::vector<double>> rows;
                    for (const Token& row : split(seg, ';')) rows.push_back(parse_reals(row));
                    c.market.gamma.push_back(std::move(rows));
                }
            },
            [](const RunConfig& c) {
                std::string out;
                for (std::size_t s = 0; s < c.market.gamma.size(); ++s) {
                    if (s > 0) out += " | ";
                    for (std::size_t i = 0; i < c.market.gamma[s].size(); ++i) {
                        if (i > 0) out += "; ";
                        out += join_reals(c.market.gamma[s][i], ", ");
                    }
                }
                return out;
            }}}}},
        {"utility", {GCTRL_REAL(utility, kappa), GCTRL_REAL(utility, beta)}},
        {"problem",
         {GCTRL_REAL(problem, horizon),
          GCTRL_REAL(problem, x0),
          GCTRL_REAL(problem, drift),
          GCTRL_REAL(problem, volatility),
          GCTRL_REAL(problem, discount),
          {"payoff",
           {[](RunConfig& c, const Token& t) {
                c.problem.payoff = parse_enum<Payoff>(t, {{"square", Payoff::kSquare},
                                                          {"neg_square", Payoff::kNegSquare},
                                                          {"constant", Payoff::kConstant}});
            },
            [](const RunConfig& c) { return std::string(to_string(c.problem.payoff)); }}},
          GCTRL_REAL(problem, payoff_constant)}},
        {"solver",
         {GCTRL_REAL(solver, x_min),
          GCTRL_REAL(solver, x_max),
          GCTRL_SIZE(solver, n_x),
          GCTRL_SIZE(solver, n_t),
          {"attitude",
           {[](RunConfig& c, const Token& t) { c.solver.attitude = parse_direction(t); },
            [](const RunConfig& c) { return std::string(direction_name(c.solver.attitude)); }}},
          {"direction",
           {[](RunConfig& c, const Token& t) {
                c.solver.direction = parse_enum<OptDirection>(
                    t, {{"minimize", OptDirection::kMinimize}, {"maximize", OptDirection::kMaximize}});
            },
            [](const RunConfig& c) { return std::string(opt_name(c.solver.direction)); }}}}},
        {"merton",
         {{"attitude",
           {[](RunConfig& c, const Token& t) {
                c.merton.attitude = parse_enum<AttitudeChoice>(t, {{"pessimist", AttitudeChoice::kPessimist},
                                                                   {"optimist", AttitudeChoice::kOptimist},
                                                                   {"both", AttitudeChoice::kBoth}});
            },
            [](const RunConfig& c) { return std::string(to_string(c.merton.attitude)); }}},
          GCTRL_REAL(merton, x0),
          GCTRL_REAL(merton, x_min),
          GCTRL_REAL(merton, x_max),
          GCTRL_SIZE(merton, n_x),
          GCTRL_SIZE(merton, n_t),
          GCTRL_SIZE(merton, n_pi),
          GCTRL_REAL(merton, pi_max),
          GCTRL_SIZE(merton, n_rho),
          GCTRL_SIZE(merton, n_a),
          GCTRL_SIZE(merton, n_policy_times)}},
        {"simulation",
         {GCTRL_SIZE(simulation, n_paths),
          GCTRL_SIZE(simulation, n_steps),
          GCTRL_SIZE(simulation, n_segments),
          GCTRL_SIZE(simulation, n_grid),
          {"seed",
           {[](RunConfig& c, const Token& t) { c.simulation.seed = parse_u64(t); },
            [](const RunConfig& c) { return fmt::format("{}", c.simulation.seed); }}},
          GCTRL_SIZE(simulation, n_export_paths),
          {"direction",
           {[](RunConfig& c, const Token& t) { c.simulation.direction = parse_direction(t); },
            [](const RunConfig& c) { return std::string(direction_name(c.simulation.direction)); }}}}},
        {"output",
         {{"directory",
           {[](RunConfig& c, const Token& t) {
                if (t.text.empty()) t.fail("output directory must not be empty");
                c.output.directory = std::string(t.text);
            },
            [](const RunConfig& c) { return c.output.directory; }}},
          {"prefix",
           {[](RunConfig& c, const Token& t) {
                if (t.text.empty() || t.text.find('/') != std::string_view::npos) {
                    t.fail("prefix must be a non-empty file-name stem");
                }
                c.output.prefix = std::string(t.text);
            },
            [](const RunConfig& c) { return c.output.prefix; }}}}},
        {"verify",
         {GCTRL_REAL(verify, perturb_a),
          GCTRL_SIZE(verify, n_points),
          {"residual_seed",
           {[](RunConfig& c, const Token& t) { c.verify.residual_seed = parse_u64(t); },
            [](const RunConfig& c) { return fmt::format("{}", c.verify.residual_seed); }}},
          GCTRL_SIZE(verify, property_trials)}},
    };
    return table;
}

#undef GCTRL_REAL
#undef GCTRL_SIZE

using Positions = std::map<std::string, Token>;  // "section.key" -> value token

[[noreturn]] void fail_at(const Positions& pos, const std::string& key, const std::string& message) {
    const auto it = pos.find(key);
    if (it == pos.end()) throw ConfigError(message, 0, 0);
    it->second.fail(message);
}

void require(bool ok, const Positions& pos, const std::string& key, const std::string& message) {
    if (!ok) fail_at(pos, key, message);
}

void validate(const RunConfig& c, const Positions& pos) {
    const auto& a = c.ambiguity;
    require(a.d >= 1, pos, "ambiguity.d", "d must be >= 1");
    require(a.sigma_lo_sq > 0.0, pos, "ambiguity.sigma_lo_sq", "sigma_lo_sq must be > 0");
    require(a.sigma_lo_sq <= a.sigma_hi_sq, pos, "ambiguity.sigma_lo_sq",
            "sigma_lo_sq must not exceed sigma_hi_sq");

    const auto& m = c.market;
    const std::size_t n_seg = m.breakpoints.size();
    require(n_seg >= 1 && m.breakpoints.front() == 0.0, pos, "market.breakpoints",
            "breakpoints must start at 0");
    for (std::size_t i = 1; i < n_seg; ++i) {
        require(m.breakpoints[i] > m.breakpoints[i - 1], pos, "market.breakpoints",
                "breakpoints must be strictly increasing");
    }
    require(m.r.size() == n_seg, pos, "market.r", "need one r per market segment");
    require(m.alpha.size() == n_seg, pos, "market.alpha", "need one alpha per market segment");
    require(m.gamma.size() == n_seg, pos, "market.gamma", "need one gamma per market segment");
    for (std::size_t s = 0; s < n_seg; ++s) {
        require(m.alpha[s].size() == a.d, pos, "market.alpha", "alpha must have d components");
        require(m.gamma[s].size() == a.d, pos, "market.gamma", "gamma must have d rows");
        for (const auto& row : m.gamma[s]) {
            require(row.size() == a.d, pos, "market.gamma", "gamma must have d columns");
        }
    }

    const auto& u = c.utility;
    require(u.kappa > 0.0 && u.kappa != 1.0, pos, "utility.kappa", "kappa must be > 0 and != 1");
    require(u.beta >= 0.0, pos, "utility.beta", "beta must be >= 0");

    const auto& p = c.problem;
    require(p.horizon > 0.0, pos, "problem.horizon", "horizon must be > 0");
    require(p.discount >= 0.0, pos, "problem.discount", "discount must be >= 0");
    if (!m.breakpoints.empty()) {
        require(m.breakpoints.back() < p.horizon, pos, "market.breakpoints",
                "breakpoints must lie in [0, horizon)");
    }

    const auto& s = c.solver;
    require(s.x_min < s.x_max, pos, "solver.x_min", "x_min must be < x_max");
    require(s.n_x >= 3, pos, "solver.n_x", "n_x must be >= 3");

    const auto& me = c.merton;
    require(me.x_min > 0.0, pos, "merton.x_min", "wealth grid needs x_min > 0");
    require(me.x_min < me.x_max, pos, "merton.x_min", "x_min must be < x_max");
    require(me.x0 > 0.0, pos, "merton.x0", "initial wealth must be > 0");
    require(me.n_x >= 3, pos, "merton.n_x", "n_x must be >= 3");
    require(me.n_pi >= 2, pos, "merton.n_pi", "n_pi must be >= 2");
    require(me.pi_max >= 0.0, pos, "merton.pi_max", "pi_max must be >= 0 (0 = automatic)");
    require(me.n_rho >= 2, pos, "merton.n_rho", "n_rho must be >= 2");
    require(me.n_a >= 2, pos, "merton.n_a", "n_a must be >= 2");
    require(me.n_policy_times >= 2, pos, "merton.n_policy_times", "n_policy_times must be >= 2");

    const auto& sim = c.simulation;
    require(sim.n_paths >= 1, pos, "simulation.n_paths", "n_paths must be >= 1");
    require(sim.n_steps >= 1, pos, "simulation.n_steps", "n_steps must be >= 1");
    require(sim.n_segments >= 1, pos, "simulation.n_segments", "n_segments must be >= 1");
    require(sim.n_grid >= 1, pos, "simulation.n_grid", "n_grid must be >= 1");

    const auto& v = c.verify;
    require(v.perturb_a > 0.0, pos, "verify.perturb_a", "perturb_a must be > 0");
    require(v.n_points >= 1, pos, "verify.n_points", "n_points must be >= 1");
}

}  // namespace

RunConfig parse_config(std::string_view text) {
    RunConfig config;
    Positions positions;
    const std::vector<std::pair<std::string, Field>>* section = nullptr;
    std::string section_name;

    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        ++line_no;
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;

        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        std::size_t lead = 0;
        const std::string_view body = trim(line, &lead);
        if (body.empty()) continue;
        const std::size_t col = lead + 1;

        if (body.front() == '[') {
            if (body.back() != ']') throw ConfigError("unterminated section header", line_no, col);
            const std::string name(trim(body.substr(1, body.size() - 2)));
            section = nullptr;
            for (const auto& [sec, entries] : fields()) {
                if (sec == name) section = &entries;
            }
            if (section == nullptr) throw ConfigError(fmt::format("unknown section [{}]", name), line_no, col + 1);
            section_name = name;
            continue;
        }

        const std::size_t eq = body.find('=');
        if (eq == std::string_view::npos) throw ConfigError("expected 'key = value'", line_no, col);
        if (section == nullptr) throw ConfigError("key outside of any [section]", line_no, col);
        const std::string key(trim(body.substr(0, eq)));
        std::size_t value_lead = 0;
        const std::string_view value = trim(body.substr(eq + 1), &value_lead);
        const Token token{value, line_no, col + eq + 1 + value_lead};

        const Field* field = nullptr;
        for (const auto& [name, f] : *section) {
            if (name == key) field = &f;
        }
        if (field == nullptr) {
            throw ConfigError(fmt::format("unknown key '{}' in [{}]", key, section_name), line_no, col);
        }
        const std::string full = section_name + "." + key;
        if (positions.contains(full)) {
            throw ConfigError(fmt::format("duplicate key '{}'", full), line_no, col);
        }
        field->parse(config, token);
        positions.emplace(full, token);
    }
    validate(config, positions);
    return config;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(fmt::format("cannot read config file '{}'", path), 0, 0);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string emit_config(const RunConfig& config) {
    std::string out;
    for (const auto& [section, entries] : fields()) {
        if (!out.empty()) out += '\n';
        out += fmt::format("[{}]\n", section);
        for (const auto& [key, field] : entries) {
            out += fmt::format("{} = {}\n", key, field.emit(config));
        }
    }
    return out;
}

AmbiguitySet make_ambiguity(const RunConfig& c) {
    return AmbiguitySet(c.ambiguity.d, c.ambiguity.sigma_lo_sq, c.ambiguity.sigma_hi_sq);
}

MarketModel make_market(const RunConfig& c) {
    const auto& m = c.market;
    const std::size_t d = c.ambiguity.d;
    std::vector<Eigen::VectorXd> alpha;
    std::vector<Eigen::MatrixXd> gamma;
    for (std::size_t s = 0; s < m.breakpoints.size(); ++s) {
        alpha.emplace_back(Eigen::Map<const Eigen::VectorXd>(m.alpha[s].data(), static_cast<Eigen::Index>(d)));
        Eigen::MatrixXd g(d, d);
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t j = 0; j < d; ++j) g(i, j) = m.gamma[s][i][j];
        }
        gamma.push_back(std::move(g));
    }
    MarketModel model = MarketModel::piecewise(m.breakpoints, m.r, std::move(alpha), std::move(gamma));
    std::vector<double> probe = m.breakpoints;
    probe.push_back(c.problem.horizon);
    model.validate(probe);
    return model;
}

CrraUtility make_utility(const RunConfig& c) { return CrraUtility(c.utility.kappa, c.utility.beta); }

}  // namespace gctrl
