#include "mmpd/manifest.hpp"

#include "mmpd/errors.hpp"

#include <json.hpp>

#include <fstream>
#include <set>

namespace mmpd {

namespace {

std::filesystem::path resolve_against(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path fp(p);
    return fp.is_absolute() ? fp : base / fp;
}

std::string relative_to(const std::filesystem::path& base, const std::filesystem::path& p) {
    if (p.empty()) return {};
    const auto b = base.empty() ? std::filesystem::path(".") : base;
    const auto r = p.lexically_normal().lexically_relative(b.lexically_normal());
    return r.empty() ? p.generic_string() : r.generic_string();
}

} // namespace

SubjectSource parse_subject_source(std::string_view s) {
    if (s == "clinical") return SubjectSource::clinical;
    if (s == "control") return SubjectSource::control;
    if (s == "synthetic") return SubjectSource::synthetic;
    throw ParseError("unknown subject source '" + std::string(s) + "' (expected clinical, control or synthetic)");
}

std::string_view to_string(SubjectSource s) {
    switch (s) {
    case SubjectSource::clinical: return "clinical";
    case SubjectSource::control: return "control";
    case SubjectSource::synthetic: return "synthetic";
    }
    return "clinical";
}

void Manifest::validate() const {
    std::set<std::string> seen;
    for (const auto& s : subjects) {
        if (s.id.empty()) throw DataError("manifest contains a subject with an empty id");
        if (!seen.insert(s.id).second) throw DataError("duplicate subject id '" + s.id + "' in manifest");
    }
}

const SubjectRecord& Manifest::find(const std::string& id) const {
    for (const auto& s : subjects)
        if (s.id == id) return s;
    throw DataError("subject '" + id + "' is not in the manifest");
}

std::size_t Manifest::count(Diagnosis label) const {
    std::size_t n = 0;
    for (const auto& s : subjects) n += s.label == label ? 1 : 0;
    return n;
}

Manifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open manifest '" + path.string() + "'");
    const auto base = path.parent_path();
    auto resolve = [&](const std::string& p) { return resolve_against(base, p); };
    Manifest m;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = path.string() + ":" + std::to_string(lineno);
        try {
            const auto j = nlohmann::json::parse(line);
            static const std::set<std::string> known{"id", "label", "source", "gait", "faces"};
            for (const auto& [k, _] : j.items())
                if (!known.count(k)) throw ParseError(where + ": unknown field '" + k + "'");
            SubjectRecord s;
            s.id = j.at("id").get<std::string>();
            s.label = parse_diagnosis(j.at("label").get<std::string>());
            s.source = parse_subject_source(j.value("source", std::string("clinical")));
            const auto gait = j.value("gait", std::string());
            if (!gait.empty()) s.gait = resolve(gait);
            if (j.contains("faces"))
                for (const auto& f : j.at("faces"))
                    s.faces.push_back({resolve(f.at("path").get<std::string>()),
                                       parse_expression(f.value("expression", std::string("neutral")))});
            m.subjects.push_back(std::move(s));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(where + ": " + e.what());
        } catch (const ParseError& e) {
            throw ParseError(std::string(e.what()).find(where) == 0 ? e.what() : where + ": " + e.what());
        }
    }
    m.validate();
    return m;
}

void save_manifest(const std::filesystem::path& path, const Manifest& manifest) {
    manifest.validate();
    const auto base = path.parent_path();
    auto rel = [&](const std::filesystem::path& p) { return relative_to(base, p); };
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot open manifest '" + path.string() + "' for writing");
    for (const auto& s : manifest.subjects) {
        nlohmann::json j;
        j["id"] = s.id;
        j["label"] = std::string(to_string(s.label));
        j["source"] = std::string(to_string(s.source));
        j["gait"] = rel(s.gait);
        j["faces"] = nlohmann::json::array();
        for (const auto& f : s.faces)
            j["faces"].push_back({{"path", rel(f.path)}, {"expression", std::string(to_string(f.expression))}});
        out << j.dump() << '\n';
    }
    if (!out) throw Error("write failed on '" + path.string() + "'");
}

std::vector<FaceImageRef> load_expression_corpus(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open expression corpus '" + path.string() + "'");
    std::vector<FaceImageRef> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = path.string() + ":" + std::to_string(lineno);
        try {
            const auto j = nlohmann::json::parse(line);
            for (const auto& [k, _] : j.items())
                if (k != "path" && k != "expression") throw ParseError(where + ": unknown field '" + k + "'");
            out.push_back({resolve_against(path.parent_path(), j.at("path").get<std::string>()),
                           parse_expression(j.at("expression").get<std::string>())});
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(where + ": " + e.what());
        }
    }
    if (out.empty()) throw DataError("expression corpus '" + path.string() + "' is empty");
    return out;
}

void save_expression_corpus(const std::filesystem::path& path, const std::vector<FaceImageRef>& images) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot open '" + path.string() + "' for writing");
    for (const auto& f : images) {
        nlohmann::json j{{"path", relative_to(path.parent_path(), f.path)},
                         {"expression", std::string(to_string(f.expression))}};
        out << j.dump() << '\n';
    }
    if (!out) throw Error("write failed on '" + path.string() + "'");
}

} // namespace mmpd
