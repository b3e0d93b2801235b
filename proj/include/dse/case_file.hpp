#pragma once

#include <filesystem>
#include <iosfwd>

#include "dse/power_model.hpp"

namespace dse {

// Text case format (version 1), '#' starts a comment:
//
//   dse-case 1
//   base_mva 100
//   frequency_hz 60
//   [buses]       id load_p load_q vm va
//   [branches]    from to r x b [tap]
//   [generators]  bus h d xd_prime pm e
//
// Everything is per-unit on base_mva, angles in radians.

CaseData parse_case(std::istream& in);
CaseData load_case(const std::filesystem::path& path);
void write_case(std::ostream& out, const CaseData& case_data);

}  // namespace dse
