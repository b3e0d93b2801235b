#include <fstream>
#include <istream>
#include <map>
#include <string>

#include "dse/error.hpp"
#include "dse/simulator.hpp"
#include "dse/text_format.hpp"

namespace dse {

namespace {

// "key=value" options after the directive's leading words.
std::map<std::string, std::string> options(const std::vector<std::string>& tokens, std::size_t first) {
  std::map<std::string, std::string> out;
  for (std::size_t i = first; i < tokens.size(); ++i) {
    const auto eq = tokens[i].find('=');
    if (eq == std::string::npos || eq == 0) {
      throw text::ParseError("expected key=value, got '" + tokens[i] + "'");
    }
    if (!out.emplace(tokens[i].substr(0, eq), tokens[i].substr(eq + 1)).second) {
      throw text::ParseError("repeated option '" + tokens[i].substr(0, eq) + "'");
    }
  }
  return out;
}

const std::string& required(const std::map<std::string, std::string>& opts, const std::string& key) {
  const auto it = opts.find(key);
  if (it == opts.end()) throw text::ParseError("missing option '" + key + "'");
  return it->second;
}

void reject_unknown(const std::map<std::string, std::string>& opts,
                    std::initializer_list<const char*> allowed) {
  for (const auto& [key, _] : opts) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw text::ParseError("unknown option '" + key + "'");
  }
}

bool to_bool(const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw text::ParseError("expected true or false, got '" + s + "'");
}

}  // namespace

Scenario parse_scenario(std::istream& in, const CaseData& case_data) {
  Scenario sc;
  bool saw_header = false;
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto tokens = text::tokenize(raw);
    if (tokens.empty()) continue;
    try {
      if (!saw_header) {
        if (tokens.size() != 2 || tokens[0] != "dse-scenario") {
          throw text::ParseError("expected 'dse-scenario <version>' header");
        }
        if (tokens[1] != "1") throw text::ParseError("unsupported scenario version " + tokens[1]);
        saw_header = true;
        continue;
      }
      const std::string& key = tokens[0];
      auto single = [&]() -> const std::string& {
        if (tokens.size() != 2) throw text::ParseError("'" + key + "' takes one value");
        return tokens[1];
      };
      if (key == "name") {
        sc.name = single();
      } else if (key == "duration") {
        sc.duration = text::to_double(single());
      } else if (key == "step") {
        sc.dt = text::to_double(single());
      } else if (key == "seed") {
        sc.seed = static_cast<std::uint64_t>(text::to_int64(single()));
      } else if (key == "process_noise") {
        sc.process_noise = text::to_double(single());
      } else if (key == "measurement_noise") {
        sc.measurement_noise = text::to_double(single());
      } else if (key == "initial_covariance") {
        sc.initial_covariance = text::to_double(single());
      } else if (key == "perturb_truth") {
        sc.perturb_truth = to_bool(single());
      } else if (key == "plot_generators") {
        sc.plot_generators.clear();
        for (std::size_t i = 1; i < tokens.size(); ++i) {
          const int g = text::to_int(tokens[i]);
          if (g < 1 || g > case_data.n_gen()) throw text::ParseError("plot generator out of range");
          sc.plot_generators.push_back(g);
        }
      } else if (key == "disturbance") {
        if (tokens.size() < 2) throw text::ParseError("disturbance needs a kind");
        const auto opts = options(tokens, 2);
        reject_unknown(opts, {"target", "factor", "start", "end"});
        Disturbance d;
        if (tokens[1] == "load-scale") {
          d.kind = DisturbanceKind::LoadScale;
        } else if (tokens[1] == "mech-power-step") {
          d.kind = DisturbanceKind::MechPowerStep;
        } else if (tokens[1] == "none") {
          d.kind = DisturbanceKind::None;
        } else {
          throw text::ParseError("unknown disturbance kind '" + tokens[1] + "'");
        }
        if (d.kind != DisturbanceKind::None) {
          d.target = text::to_int(required(opts, "target"));
          d.factor = text::to_double(required(opts, "factor"));
          d.t_start = text::to_double(required(opts, "start"));
          d.t_end = text::to_double(required(opts, "end"));
          if (d.kind == DisturbanceKind::LoadScale) case_data.bus_index(d.target);
        }
        sc.disturbance = d;
      } else if (key == "fault") {
        if (tokens.size() < 2) throw text::ParseError("fault needs a kind");
        const auto opts = options(tokens, 2);
        Fault f;
        if (tokens[1] == "comm-loss") {
          f.kind = FaultKind::CommLoss;
          reject_unknown(opts, {"channels", "start", "end"});
          f.t_end = text::to_double(required(opts, "end"));
        } else if (tokens[1] == "gross-error") {
          f.kind = FaultKind::GrossError;
          reject_unknown(opts, {"channels", "start", "end", "value"});
          f.value = text::to_double(required(opts, "value"));
          if (opts.contains("end")) f.t_end = text::to_double(opts.at("end"));
        } else {
          throw text::ParseError("unknown fault kind '" + tokens[1] + "'");
        }
        f.t_start = text::to_double(required(opts, "start"));
        for (const auto& name : text::split(required(opts, "channels"), ',')) {
          f.channel_names.push_back(name);
          f.channels.push_back(channel_index(name, case_data));
        }
        sc.faults.push_back(std::move(f));
      } else {
        throw text::ParseError("unknown directive '" + key + "'");
      }
    } catch (const text::ParseError& e) {
      throw ConfigError("scenario line " + std::to_string(line_no) + ": " + e.what());
    } catch (const ConfigError& e) {
      throw ConfigError("scenario line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!saw_header) throw ConfigError("empty scenario file");
  sc.validate(2 * case_data.n_gen() + 2 * case_data.n_bus());
  return sc;
}

Scenario load_scenario(const std::filesystem::path& path, const CaseData& case_data) {
  std::ifstream in(path);
  if (!in) throw ConfigError("scenario file not found: " + path.string());
  Scenario sc = parse_scenario(in, case_data);
  if (sc.name.empty()) sc.name = path.stem().string();
  return sc;
}

}  // namespace dse
