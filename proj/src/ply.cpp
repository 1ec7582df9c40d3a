#include "gausssurf/ply.hpp"

#include "gausssurf/common.hpp"

#include <bit>
#include <fstream>
#include <sstream>

namespace gausssurf::ply {

static_assert(std::endian::native == std::endian::little, "PLY I/O assumes a little-endian host");

std::size_t type_size(Type t)
{
    switch (t) {
    case Type::Int8:
    case Type::UInt8: return 1;
    case Type::Int16:
    case Type::UInt16: return 2;
    case Type::Int32:
    case Type::UInt32:
    case Type::Float32: return 4;
    case Type::Float64: return 8;
    }
    return 0;
}

Type parse_type(const std::string& name)
{
    if (name == "char" || name == "int8") return Type::Int8;
    if (name == "uchar" || name == "uint8") return Type::UInt8;
    if (name == "short" || name == "int16") return Type::Int16;
    if (name == "ushort" || name == "uint16") return Type::UInt16;
    if (name == "int" || name == "int32") return Type::Int32;
    if (name == "uint" || name == "uint32") return Type::UInt32;
    if (name == "float" || name == "float32") return Type::Float32;
    if (name == "double" || name == "float64") return Type::Float64;
    throw FormatError("unknown PLY property type '" + name + "'");
}

int Element::find(const std::string& prop) const
{
    for (std::size_t i = 0; i < properties.size(); ++i) {
        if (properties[i].name == prop) {
            return static_cast<int>(i);
        }
    }
    return -1;
}

std::size_t Element::fixed_stride() const
{
    std::size_t s = 0;
    for (const auto& p : properties) {
        s += type_size(p.type);
    }
    return s;
}

const Element* Header::find(const std::string& name) const
{
    for (const auto& e : elements) {
        if (e.name == name) {
            return &e;
        }
    }
    return nullptr;
}

Header parse_header(const std::vector<char>& bytes, const std::string& path)
{
    const std::string marker = "end_header\n";
    const std::string_view view(bytes.data(), bytes.size());
    const auto end = view.find(marker);
    if (view.substr(0, 4) != "ply\n" || end == std::string_view::npos) {
        throw FormatError("'" + path + "' is not a PLY file");
    }
    Header header;
    header.data_offset = end + marker.size();

    std::istringstream lines(std::string(view.substr(0, end)));
    std::string line;
    bool saw_format = false;
    while (std::getline(lines, line)) {
        std::istringstream ls(line);
        std::string kw;
        ls >> kw;
        if (kw == "format") {
            std::string fmt;
            ls >> fmt;
            if (fmt != "binary_little_endian") {
                throw FormatError("'" + path + "': only binary_little_endian PLY is supported (got " + fmt + ")");
            }
            saw_format = true;
        } else if (kw == "element") {
            Element e;
            ls >> e.name >> e.count;
            header.elements.push_back(e);
        } else if (kw == "property") {
            if (header.elements.empty()) {
                throw FormatError("'" + path + "': property before any element");
            }
            Property p;
            std::string type;
            ls >> type;
            if (type == "list") {
                std::string count_type, item_type;
                ls >> count_type >> item_type >> p.name;
                p.is_list = true;
                p.count_type = parse_type(count_type);
                p.type = parse_type(item_type);
            } else {
                p.type = parse_type(type);
                ls >> p.name;
            }
            header.elements.back().properties.push_back(p);
        }
    }
    if (!saw_format) {
        throw FormatError("'" + path + "': missing format line");
    }
    return header;
}

double read_scalar(const char* p, Type t)
{
    switch (t) {
    case Type::Int8: { std::int8_t v; std::memcpy(&v, p, 1); return v; }
    case Type::UInt8: { std::uint8_t v; std::memcpy(&v, p, 1); return v; }
    case Type::Int16: { std::int16_t v; std::memcpy(&v, p, 2); return v; }
    case Type::UInt16: { std::uint16_t v; std::memcpy(&v, p, 2); return v; }
    case Type::Int32: { std::int32_t v; std::memcpy(&v, p, 4); return v; }
    case Type::UInt32: { std::uint32_t v; std::memcpy(&v, p, 4); return v; }
    case Type::Float32: { float v; std::memcpy(&v, p, 4); return v; }
    case Type::Float64: { double v; std::memcpy(&v, p, 8); return v; }
    }
    return 0;
}

std::vector<char> read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open '" + path + "'");
    }
    return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::string& header, const std::vector<char>& payload)
{
    if (path.empty()) {
        throw IoError("empty output path");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write '" + path + "'");
    }
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) {
        throw IoError("write failed for '" + path + "'");
    }
}

} // namespace gausssurf::ply
