#pragma once

// Parsing of the two PLC variable-list panes (the INPUTS global variable list
// and the STATE structure) and generation of the signal manifest from them.

#include <tunneltwin/digest.hpp>
#include <tunneltwin/error.hpp>
#include <tunneltwin/signal_bus.hpp>

#include <algorithm>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace tunneltwin {

enum class DeclaredType { Bool, EnumE, Other };
enum class VarSource { InputsFile, StateFile };
enum class Classification { Actuator, Sensor, Button, Skip };

struct VariableRecord {
    std::string raw_line;
    std::string var_name;
    DeclaredType declared_type = DeclaredType::Other;
    VarSource source = VarSource::InputsFile;

    friend bool operator==(const VariableRecord &, const VariableRecord &) = default;
};

struct VarlistDiagnostics {
    int blank_lines = 0;
    int keyword_lines = 0;      // VAR_GLOBAL, END_VAR, TYPE, STRUCT, ...
    int unrecognized_lines = 0; // lines that do not start with an identifier
    int skipped_records = 0;    // records classified Skip
    int omitted_buttons = 0;    // Button records dropped when GUI buttons are off

    VarlistDiagnostics &operator+=(const VarlistDiagnostics &o) {
        blank_lines += o.blank_lines;
        keyword_lines += o.keyword_lines;
        unrecognized_lines += o.unrecognized_lines;
        skipped_records += o.skipped_records;
        omitted_buttons += o.omitted_buttons;
        return *this;
    }
};

namespace detail {

inline bool is_ident_start(char c) { return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_'; }
inline bool is_ident_char(char c) { return is_ident_start(c) || (c >= '0' && c <= '9'); }

inline std::string_view trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos)
        return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        auto nl = text.find('\n', start);
        if (nl == std::string_view::npos) {
            lines.push_back(text.substr(start));
            break;
        }
        lines.push_back(text.substr(start, nl - start));
        start = nl + 1;
    }
    return lines;
}

/// Identifier-like tokens of a line, in order.
inline std::vector<std::string_view> word_tokens(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        if (!is_ident_char(line[i])) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < line.size() && is_ident_char(line[j]))
            ++j;
        out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

inline bool is_structure_keyword(std::string_view w) {
    static const std::set<std::string_view> kw = {"VAR_GLOBAL", "END_VAR", "VAR",   "TYPE",
                                                  "END_TYPE",   "STRUCT",  "END_STRUCT"};
    return kw.contains(w);
}

} // namespace detail

/// One record per declaration line; structure keywords, blank lines and
/// lines that do not begin with an identifier produce none.
inline std::vector<VariableRecord> parse_varlist(std::string_view text, VarSource source,
                                                 VarlistDiagnostics *diag = nullptr) {
    VarlistDiagnostics local;
    std::vector<VariableRecord> out;
    for (auto raw : detail::split_lines(text)) {
        if (!raw.empty() && raw.back() == '\r')
            raw.remove_suffix(1);
        auto line = detail::trim(raw);
        if (line.empty()) {
            ++local.blank_lines;
            continue;
        }
        // varName is the first whitespace-delimited word
        auto first = line.substr(0, line.find_first_of(" \t"));
        if (!detail::is_ident_start(first.front()) ||
            !std::all_of(first.begin(), first.end(), detail::is_ident_char)) {
            // trailing ';' or ':' glued to the name is still a declaration
            auto cut = first.find_first_of(":;");
            if (cut == std::string_view::npos || cut == 0 || !detail::is_ident_start(first.front()) ||
                !std::all_of(first.begin(), first.begin() + static_cast<long>(cut), detail::is_ident_char)) {
                ++local.unrecognized_lines;
                continue;
            }
            first = first.substr(0, cut);
        }
        if (detail::is_structure_keyword(first)) {
            ++local.keyword_lines;
            continue;
        }

        VariableRecord rec;
        rec.raw_line = std::string(raw);
        rec.var_name = std::string(first);
        rec.source = source;
        auto words = detail::word_tokens(line);
        bool has_enum = false;
        bool has_bool = false;
        for (std::size_t i = 1; i < words.size(); ++i) {
            has_enum = has_enum || words[i] == "enum_E";
            has_bool = has_bool || words[i] == "BOOL";
        }
        rec.declared_type = has_enum ? DeclaredType::EnumE : has_bool ? DeclaredType::Bool : DeclaredType::Other;
        out.push_back(std::move(rec));
    }
    if (diag)
        *diag += local;
    return out;
}

/// Inverse of parse_varlist for record lists (raw lines, newline-terminated).
inline std::string print_varlist(const std::vector<VariableRecord> &records) {
    std::string out;
    for (const auto &r : records) {
        out += r.raw_line;
        out += '\n';
    }
    return out;
}

inline Classification classify(const VariableRecord &rec) {
    const auto &n = rec.var_name;
    const bool is_d = n.starts_with("dvar");
    const bool is_i = n.starts_with("ivar");
    const bool is_bool = rec.declared_type == DeclaredType::Bool;
    const bool gui = n.find("GUI") != std::string::npos;

    if ((is_i && n.find("button") != std::string::npos) || (is_d && gui && is_bool))
        return Classification::Button;
    if (is_d && is_bool && rec.raw_line.find("_HW_") != std::string::npos && !gui)
        return Classification::Actuator;
    if (is_i)
        return Classification::Sensor;
    return Classification::Skip;
}

/// Kind of a PLC name when only the name is known (policy documents).
inline SignalKind infer_kind(std::string_view name) {
    if (name.starts_with("ivar"))
        return name.find("button") != std::string_view::npos ? SignalKind::Button : SignalKind::Sensor;
    return name.find("GUI") != std::string_view::npos ? SignalKind::Button : SignalKind::Actuator;
}

inline Direction infer_direction(std::string_view name) {
    return name.starts_with("ivar") ? Direction::Input : Direction::Output;
}

struct SignalManifest {
    std::vector<SignalDef> entries;
    std::string source_digest;
};

struct ManifestOptions {
    bool include_buttons = true;
};

/// One SignalDef per non-Skip record: STATE-file records first, then INPUTS,
/// each in file order.
inline SignalManifest generate_manifest(const std::vector<VariableRecord> &records, ManifestOptions opts = {},
                                        VarlistDiagnostics *diag = nullptr) {
    VarlistDiagnostics local;
    SignalManifest m;
    std::set<std::string> seen;
    for (auto pass : {VarSource::StateFile, VarSource::InputsFile}) {
        for (const auto &r : records) {
            if (r.source != pass)
                continue;
            auto c = classify(r);
            if (c == Classification::Skip) {
                ++local.skipped_records;
                continue;
            }
            if (c == Classification::Button && !opts.include_buttons) {
                ++local.omitted_buttons;
                continue;
            }
            if (!seen.insert(r.var_name).second)
                throw Error(ErrorCode::DuplicateVariable, r.var_name);
            SignalDef d;
            d.name = r.var_name;
            d.direction = infer_direction(r.var_name);
            d.kind = c == Classification::Actuator ? SignalKind::Actuator
                     : c == Classification::Sensor ? SignalKind::Sensor
                                                   : SignalKind::Button;
            d.group = derive_group(d.name);
            m.entries.push_back(std::move(d));
        }
    }
    if (diag)
        *diag += local;
    return m;
}

inline std::string source_digest(std::string_view inputs_text, std::string_view state_text) {
    Fnv1a64 h;
    h.update(inputs_text);
    h.update(std::string_view("\0", 1));
    h.update(state_text);
    return h.hex();
}

/// Both files in one go, with the source digest filled in.
inline SignalManifest codegen_manifest(std::string_view inputs_text, std::string_view state_text,
                                       ManifestOptions opts = {}, VarlistDiagnostics *diag = nullptr) {
    auto records = parse_varlist(state_text, VarSource::StateFile, diag);
    auto inputs = parse_varlist(inputs_text, VarSource::InputsFile, diag);
    records.insert(records.end(), inputs.begin(), inputs.end());
    auto m = generate_manifest(records, opts, diag);
    m.source_digest = source_digest(inputs_text, state_text);
    return m;
}

} // namespace tunneltwin
