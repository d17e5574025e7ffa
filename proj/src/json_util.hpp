#pragma once
// Strict JSON field access shared by io.cpp and config.cpp: wrong types and
// unknown keys become InvalidConfig instead of library exceptions.

#include <initializer_list>
#include <string>

#include "icr/error.hpp"
#include "icr/io.hpp"

namespace icr::detail {

inline Json parse_json(const std::string& text, const std::string& what) {
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw InvalidConfig(what + ": " + e.what());
    }
}

inline void require_object(const Json& j, const std::string& where) {
    if (!j.is_object()) throw InvalidConfig(where + " must be a JSON object");
}

inline void check_keys(const Json& j, const std::string& where, std::initializer_list<const char*> allowed) {
    require_object(j, where);
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || it.key() == a;
        if (!ok) throw InvalidConfig("unknown key '" + it.key() + "' in " + where);
    }
}

// Reads j[key] into dst when present; leaves dst untouched otherwise.
template <class T>
void read_opt(const Json& j, const char* key, T& dst, const std::string& where) {
    const auto it = j.find(key);
    if (it == j.end()) return;
    try {
        dst = it->template get<T>();
    } catch (const Json::exception& e) {
        throw InvalidConfig(where + "." + key + ": " + e.what());
    }
}

template <class T>
T read_req(const Json& j, const char* key, const std::string& where) {
    require_object(j, where);
    if (!j.contains(key)) throw InvalidConfig("missing key '" + std::string(key) + "' in " + where);
    T out{};
    read_opt(j, key, out, where);
    return out;
}

}  // namespace icr::detail
