#include "dse/case_file.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "dse/error.hpp"
#include "dse/text_format.hpp"

namespace dse {

namespace {

enum class Section { Header, Buses, Branches, Generators };

}  // namespace

CaseData parse_case(std::istream& in) {
  CaseData data;
  Section section = Section::Header;
  bool saw_header = false;
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto tokens = text::tokenize(raw);
    if (tokens.empty()) continue;
    auto fail = [&](const std::string& what) {
      throw ConfigError("case line " + std::to_string(line_no) + ": " + what);
    };
    if (!saw_header) {
      if (tokens.size() != 2 || tokens[0] != "dse-case") fail("expected 'dse-case <version>' header");
      if (tokens[1] != "1") fail("unsupported case version " + tokens[1]);
      saw_header = true;
      continue;
    }
    const std::string& head = tokens[0];
    if (head == "[buses]") {
      section = Section::Buses;
      continue;
    }
    if (head == "[branches]") {
      section = Section::Branches;
      continue;
    }
    if (head == "[generators]") {
      section = Section::Generators;
      continue;
    }
    try {
      switch (section) {
        case Section::Header:
          if (tokens.size() != 2) fail("expected 'key value'");
          if (head == "base_mva") {
            data.base_mva = text::to_double(tokens[1]);
          } else if (head == "frequency_hz") {
            data.frequency_hz = text::to_double(tokens[1]);
          } else {
            fail("unknown key '" + head + "'");
          }
          break;
        case Section::Buses:
          if (tokens.size() != 5) fail("bus rows have 5 fields");
          data.buses.push_back({text::to_int(tokens[0]), text::to_double(tokens[1]),
                                text::to_double(tokens[2]), text::to_double(tokens[3]),
                                text::to_double(tokens[4])});
          break;
        case Section::Branches: {
          if (tokens.size() != 5 && tokens.size() != 6) fail("branch rows have 5 or 6 fields");
          BranchRecord br{text::to_int(tokens[0]), text::to_int(tokens[1]),
                          text::to_double(tokens[2]), text::to_double(tokens[3]),
                          text::to_double(tokens[4])};
          if (tokens.size() == 6) br.tap = text::to_double(tokens[5]);
          data.branches.push_back(br);
          break;
        }
        case Section::Generators: {
          if (tokens.size() != 6) fail("generator rows have 6 fields");
          GeneratorParams p;
          p.inertia_h = text::to_double(tokens[1]);
          p.damping_d = text::to_double(tokens[2]);
          p.xd_prime = text::to_double(tokens[3]);
          p.mech_power_pm = text::to_double(tokens[4]);
          p.emf_e = text::to_double(tokens[5]);
          data.generators.push_back({text::to_int(tokens[0]), p});
          break;
        }
      }
    } catch (const text::ParseError& e) {
      fail(e.what());
    }
  }
  if (!saw_header) throw ConfigError("empty case file");
  if (data.buses.empty()) throw ConfigError("case has no buses");
  if (data.generators.empty()) throw ConfigError("case has no generators");
  if (!(data.frequency_hz > 0.0)) throw ConfigError("frequency must be positive");
  for (std::size_t i = 0; i < data.buses.size(); ++i) {
    for (std::size_t j = i + 1; j < data.buses.size(); ++j) {
      if (data.buses[i].id == data.buses[j].id) throw ConfigError("duplicate bus id");
    }
  }
  for (const auto& g : data.generators) {
    data.bus_index(g.bus);
    g.params.validate();
  }
  return data;
}

CaseData load_case(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("case file not found: " + path.string());
  return parse_case(in);
}

void write_case(std::ostream& out, const CaseData& case_data) {
  using text::format_double;
  out << "dse-case 1\n";
  out << "base_mva " << format_double(case_data.base_mva) << '\n';
  out << "frequency_hz " << format_double(case_data.frequency_hz) << "\n\n[buses]\n";
  for (const auto& b : case_data.buses) {
    out << b.id << ' ' << format_double(b.load_p) << ' ' << format_double(b.load_q) << ' '
        << format_double(b.vm) << ' ' << format_double(b.va) << '\n';
  }
  out << "\n[branches]\n";
  for (const auto& br : case_data.branches) {
    out << br.from << ' ' << br.to << ' ' << format_double(br.r) << ' ' << format_double(br.x)
        << ' ' << format_double(br.b_shunt) << ' ' << format_double(br.tap) << '\n';
  }
  out << "\n[generators]\n";
  for (const auto& g : case_data.generators) {
    const auto& p = g.params;
    out << g.bus << ' ' << format_double(p.inertia_h) << ' ' << format_double(p.damping_d) << ' '
        << format_double(p.xd_prime) << ' ' << format_double(p.mech_power_pm) << ' '
        << format_double(p.emf_e) << '\n';
  }
}

}  // namespace dse
