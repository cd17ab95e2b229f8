#include "kirag/prompts.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "kirag/util.hpp"

namespace kirag {

std::string render_prompt(std::string_view tpl,
                          const std::vector<std::pair<std::string, std::string>>& subs) {
    std::string out;
    out.reserve(tpl.size() + 64);
    size_t i = 0;
    while (i < tpl.size()) {
        if (tpl[i] != '{') {
            out.push_back(tpl[i++]);
            continue;
        }
        bool matched = false;
        for (const auto& [key, value] : subs) {
            const size_t marker_len = key.size() + 2;
            if (tpl.size() - i >= marker_len && tpl[i + marker_len - 1] == '}' &&
                tpl.substr(i + 1, key.size()) == key) {
                out += value;
                i += marker_len;
                matched = true;
                break;
            }
        }
        if (!matched) out.push_back(tpl[i++]);
    }
    return out;
}

std::string prompt_fingerprint(std::string_view text) { return to_hex(fnv1a64(text)); }

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

PromptSet PromptSet::with_overrides(const std::optional<std::string>& extraction_path,
                                    const std::optional<std::string>& constructor_path,
                                    const std::optional<std::string>& reader_path) {
    PromptSet out;
    if (extraction_path) out.extraction = read_text_file(*extraction_path);
    if (constructor_path) out.constructor = read_text_file(*constructor_path);
    if (reader_path) out.reader = read_text_file(*reader_path);
    return out;
}

}  // namespace kirag
