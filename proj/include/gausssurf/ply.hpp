#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

namespace gausssurf::ply {

enum class Type { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

std::size_t type_size(Type t);
Type parse_type(const std::string& name);   // throws FormatError

struct Property {
    std::string name;
    Type type = Type::Float32;
    bool is_list = false;
    Type count_type = Type::UInt8;
};

struct Element {
    std::string name;
    std::size_t count = 0;
    std::vector<Property> properties;

    int find(const std::string& prop) const;
    /// Record size in bytes; only valid when no property is a list.
    std::size_t fixed_stride() const;
};

struct Header {
    std::vector<Element> elements;
    std::size_t data_offset = 0;   // first byte after end_header\n

    const Element* find(const std::string& name) const;
};

/// Parses the header of a binary little-endian PLY buffer.
Header parse_header(const std::vector<char>& bytes, const std::string& path);

std::vector<char> read_file(const std::string& path);
void write_file(const std::string& path, const std::string& header, const std::vector<char>& payload);

double read_scalar(const char* p, Type t);

template <typename T>
void append(std::vector<char>& buf, T value)
{
    const auto n = buf.size();
    buf.resize(n + sizeof(T));
    std::memcpy(buf.data() + n, &value, sizeof(T));
}

} // namespace gausssurf::ply
