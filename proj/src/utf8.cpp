#include "s2seval/utf8.hpp"

namespace s2seval::utf8 {

namespace {

// Length of the sequence starting with lead byte `c`, or 0 if `c` cannot start one.
std::size_t sequence_length(unsigned char c) {
    if (c < 0x80) return 1;
    if ((c >> 5) == 0x6) return 2;
    if ((c >> 4) == 0xE) return 3;
    if ((c >> 3) == 0x1E) return 4;
    return 0;
}

bool well_formed(std::string_view text, std::size_t pos, std::size_t len) {
    if (len == 0 || pos + len > text.size()) return false;
    for (std::size_t k = 1; k < len; ++k) {
        if ((static_cast<unsigned char>(text[pos + k]) & 0xC0) != 0x80) return false;
    }
    return true;
}

} // namespace

std::vector<std::string> split_scalars(std::string_view text) {
    std::vector<std::string> out;
    out.reserve(text.size());
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t len = sequence_length(static_cast<unsigned char>(text[pos]));
        if (!well_formed(text, pos, len)) len = 1;
        out.emplace_back(text.substr(pos, len));
        pos += len;
    }
    return out;
}

std::vector<char32_t> decode(std::string_view text) {
    std::vector<char32_t> out;
    out.reserve(text.size());
    std::size_t pos = 0;
    while (pos < text.size()) {
        const auto lead = static_cast<unsigned char>(text[pos]);
        std::size_t len = sequence_length(lead);
        if (!well_formed(text, pos, len)) {
            out.push_back(lead);
            ++pos;
            continue;
        }
        char32_t cp = 0;
        switch (len) {
        case 1: cp = lead; break;
        case 2: cp = lead & 0x1F; break;
        case 3: cp = lead & 0x0F; break;
        default: cp = lead & 0x07; break;
        }
        for (std::size_t k = 1; k < len; ++k) {
            cp = (cp << 6) | (static_cast<unsigned char>(text[pos + k]) & 0x3F);
        }
        out.push_back(cp);
        pos += len;
    }
    return out;
}

std::string encode(char32_t cp) {
    std::string out;
    if (cp < 0x80) {
        out += static_cast<char>(cp);
    } else if (cp < 0x800) {
        out += static_cast<char>(0xC0 | (cp >> 6));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
        out += static_cast<char>(0xE0 | (cp >> 12));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
        out += static_cast<char>(0xF0 | (cp >> 18));
        out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    }
    return out;
}

bool is_space(char32_t cp) {
    switch (cp) {
    case U' ': case U'\t': case U'\n': case U'\r': case U'\v': case U'\f':
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
        return true;
    default:
        return cp >= 0x2000 && cp <= 0x200A;
    }
}

std::string to_lower(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    for (char32_t cp : decode(text)) {
        if (cp >= U'A' && cp <= U'Z') {
            cp += 32;
        } else if ((cp >= 0xC0 && cp <= 0xDE) && cp != 0xD7) {
            cp += 32;
        } else if (cp == 0x178) {
            cp = 0xFF;
        } else if (cp >= 0x100 && cp <= 0x17F && cp != 0x130 && cp != 0x131 && cp != 0x138 &&
                   cp != 0x149 && cp != 0x17F) {
            // Latin Extended-A alternates upper/lower in pairs, with a phase
            // shift between U+0139 and U+0148 and again from U+0179.
            const bool shifted = (cp >= 0x139 && cp <= 0x148) || cp >= 0x179;
            if ((cp % 2 == 0) != shifted) cp += 1;
        }
        out += encode(cp);
    }
    return out;
}

std::string strip_whitespace(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    for (char32_t cp : decode(text)) {
        if (!is_space(cp)) out += encode(cp);
    }
    return out;
}

} // namespace s2seval::utf8
