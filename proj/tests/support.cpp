#include "support.hpp"

#include <map>
#include <unistd.h>

namespace ehrq::testing {

const Database& fixture_db() {
    static const Database db = preprocess(generate_synthetic(7, SynthScale{}));
    return db;
}

const TemplateBank& bank() {
    static const TemplateBank b = load_templates(default_templates_path());
    return b;
}

const Lexicon& lexicon() {
    static const Lexicon l = load_lexicon(default_lexicon_path());
    return l;
}

std::int64_t single_admission_patient() {
    const Table& a = fixture_db().table("admissions");
    const std::size_t col = a.require_column("subject_id");
    std::map<std::int64_t, int> n;
    for (const auto& r : a.rows) ++n[std::get<std::int64_t>(r[col])];
    for (const auto& [id, count] : n)
        if (count == 1) return id;
    return -1;
}

std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() /
                     ("ehrq-test-" + std::to_string(::getpid()) + "-" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace ehrq::testing
