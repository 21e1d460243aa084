#pragma once

#include <filesystem>
#include <string>

#include "ehrq/database.hpp"
#include "ehrq/lexicon.hpp"
#include "ehrq/templates.hpp"

namespace ehrq::testing {

/// Seed 7, default scale, preprocessed. Built once per process.
const Database& fixture_db();
const TemplateBank& bank();
const Lexicon& lexicon();

/// Lowest subject_id with exactly one admission in the fixture.
std::int64_t single_admission_patient();

/// Fresh empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& name);

}  // namespace ehrq::testing
