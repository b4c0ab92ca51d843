// SPDX-License-Identifier: Apache-2.0
#include "aspectprobe/text.hpp"

#include <unicode/locid.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include "aspectprobe/error.hpp"

namespace aspectprobe::text {

std::u32string decode(std::string_view s) {
    std::u32string out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        const auto b0 = static_cast<unsigned char>(s[i]);
        char32_t cp = 0;
        std::size_t len = 0;
        if (b0 < 0x80) {
            cp = b0;
            len = 1;
        } else if ((b0 >> 5) == 0x6) {
            cp = b0 & 0x1F;
            len = 2;
        } else if ((b0 >> 4) == 0xE) {
            cp = b0 & 0x0F;
            len = 3;
        } else if ((b0 >> 3) == 0x1E) {
            cp = b0 & 0x07;
            len = 4;
        } else {
            throw Error("invalid_utf8", "bad lead byte at offset " + std::to_string(i));
        }
        if (i + len > s.size()) throw Error("invalid_utf8", "truncated sequence");
        for (std::size_t k = 1; k < len; ++k) {
            const auto b = static_cast<unsigned char>(s[i + k]);
            if ((b >> 6) != 0x2) throw Error("invalid_utf8", "bad continuation byte");
            cp = (cp << 6) | (b & 0x3F);
        }
        out.push_back(cp);
        i += len;
    }
    return out;
}

std::string encode(std::u32string_view cps) {
    std::string out;
    out.reserve(cps.size() * 2);
    for (char32_t cp : cps) {
        if (cp < 0x80) {
            out.push_back(static_cast<char>(cp));
        } else if (cp < 0x800) {
            out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else if (cp < 0x10000) {
            out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else {
            out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        }
    }
    return out;
}

std::size_t length(std::string_view s) {
    std::size_t n = 0;
    for (char c : s) {
        if ((static_cast<unsigned char>(c) & 0xC0) != 0x80) ++n;
    }
    return n;
}

std::string substr(std::string_view s, std::size_t begin, std::size_t end) {
    const auto cps = decode(s);
    if (begin > end || end > cps.size()) throw Error("span_out_of_range", "");
    return encode(std::u32string_view(cps).substr(begin, end - begin));
}

std::string normalize_lemma(std::string_view s) {
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
    if (U_FAILURE(status)) throw Error("icu_failure", u_errorName(status));
    icu::UnicodeString u = icu::UnicodeString::fromUTF8(icu::StringPiece(s.data(), static_cast<int32_t>(s.size())));
    icu::UnicodeString normalized = nfc->normalize(u, status);
    if (U_FAILURE(status)) throw Error("icu_failure", u_errorName(status));
    normalized.toLower(icu::Locale::getRoot());
    std::string out;
    normalized.toUTF8String(out);
    return out;
}

std::string to_lower(std::string_view s) {
    icu::UnicodeString u = icu::UnicodeString::fromUTF8(icu::StringPiece(s.data(), static_cast<int32_t>(s.size())));
    u.toLower(icu::Locale::getRoot());
    std::string out;
    u.toUTF8String(out);
    return out;
}

bool is_space(char32_t c) { return u_isUWhiteSpace(static_cast<UChar32>(c)) != 0; }

bool is_punct(char32_t c) { return u_ispunct(static_cast<UChar32>(c)) != 0; }

std::vector<Piece> split_words(std::string_view utf8) {
    const auto cps = decode(utf8);
    std::vector<Piece> out;
    std::size_t i = 0;
    while (i < cps.size()) {
        if (is_space(cps[i])) {
            ++i;
            continue;
        }
        if (is_punct(cps[i])) {
            out.push_back({encode(std::u32string_view(&cps[i], 1)), i, i + 1});
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < cps.size() && !is_space(cps[j]) && !is_punct(cps[j])) ++j;
        out.push_back({encode(std::u32string_view(cps).substr(i, j - i)), i, j});
        i = j;
    }
    return out;
}

}  // namespace aspectprobe::text
