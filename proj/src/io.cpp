#include "groupreg/io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace groupreg {

namespace {

const char* kind_name(ArrayKind k) {
    switch (k) {
        case ArrayKind::Image: return "image";
        case ArrayKind::Vector: return "vector";
        case ArrayKind::Categorical: return "categorical";
        case ArrayKind::Label: return "label";
    }
    return "?";
}

ArrayKind kind_from(const std::string& s, std::size_t offset) {
    if (s == "image") return ArrayKind::Image;
    if (s == "vector") return ArrayKind::Vector;
    if (s == "categorical") return ArrayKind::Categorical;
    if (s == "label") return ArrayKind::Label;
    throw ParseError("unknown array kind '" + s + "'", offset);
}

std::size_t dtype_size(const std::string& dtype, std::size_t offset) {
    if (dtype == "float32" || dtype == "int32") return 4;
    if (dtype == "float64") return 8;
    throw ParseError("unknown dtype '" + dtype + "'", offset);
}

void write_container(const std::string& path, const ArrayHeader& h, const void* payload,
                     std::size_t nbytes) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << "GRF1\n";
    os << "kind " << kind_name(h.kind) << "\n";
    os << "dims";
    for (int d : h.grid.dims) os << " " << d;
    os << "\nspacing";
    os.precision(17);
    for (double s : h.grid.spacing) os << " " << s;
    os << "\ndtype " << h.dtype << "\n";
    os << "channels " << h.channels << "\n";
    os << "data " << nbytes << "\n";
    os.write(static_cast<const char*>(payload), static_cast<std::streamsize>(nbytes));
    if (!os) throw std::runtime_error("write failed: " + path);
}

struct Container {
    ArrayHeader header;
    std::vector<char> payload;
};

Container read_container(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open for reading: " + path);
    std::string magic;
    std::getline(is, magic);
    if (magic != "GRF1") throw ParseError("bad magic, expected GRF1", 0);

    Container c;
    std::size_t nbytes = 0;
    bool have_data = false;
    std::vector<int> dims;
    std::vector<double> spacing;
    while (!have_data) {
        const std::size_t line_offset = static_cast<std::size_t>(is.tellg());
        std::string line;
        if (!std::getline(is, line))
            throw ParseError("truncated header, missing data line", line_offset);
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "kind") {
            std::string v;
            ls >> v;
            c.header.kind = kind_from(v, line_offset);
        } else if (key == "dims") {
            int v;
            while (ls >> v) dims.push_back(v);
        } else if (key == "spacing") {
            double v;
            while (ls >> v) spacing.push_back(v);
        } else if (key == "dtype") {
            ls >> c.header.dtype;
            dtype_size(c.header.dtype, line_offset);
        } else if (key == "channels") {
            ls >> c.header.channels;
        } else if (key == "data") {
            if (!(ls >> nbytes)) throw ParseError("malformed data line", line_offset);
            have_data = true;
        } else {
            throw ParseError("unknown header field '" + key + "'", line_offset);
        }
    }
    try {
        c.header.grid = GridSpec(dims, spacing);
    } catch (const std::invalid_argument& e) {
        throw ParseError(std::string("invalid grid: ") + e.what(), 0);
    }
    const std::size_t expected = c.header.grid.voxels() *
                                 static_cast<std::size_t>(c.header.channels) *
                                 dtype_size(c.header.dtype, 0);
    const std::size_t payload_offset = static_cast<std::size_t>(is.tellg());
    if (nbytes != expected)
        throw ParseError("header dims inconsistent with payload size", payload_offset);
    c.payload.resize(nbytes);
    is.read(c.payload.data(), static_cast<std::streamsize>(nbytes));
    if (static_cast<std::size_t>(is.gcount()) != nbytes)
        throw ParseError("truncated payload", payload_offset);
    return c;
}

std::vector<char> encode_doubles(const std::vector<double>& src, bool float64) {
    std::vector<char> out;
    if (float64) {
        out.resize(src.size() * 8);
        std::memcpy(out.data(), src.data(), out.size());
    } else {
        out.resize(src.size() * 4);
        float* dst = reinterpret_cast<float*>(out.data());
        for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<float>(src[i]);
    }
    return out;
}

std::vector<double> decode_doubles(const Container& c) {
    std::vector<double> out;
    if (c.header.dtype == "float64") {
        out.resize(c.payload.size() / 8);
        std::memcpy(out.data(), c.payload.data(), c.payload.size());
    } else if (c.header.dtype == "float32") {
        out.resize(c.payload.size() / 4);
        const float* src = reinterpret_cast<const float*>(c.payload.data());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = src[i];
    } else {
        throw std::runtime_error("expected floating payload, got " + c.header.dtype);
    }
    return out;
}

}  // namespace

void write_image(const ImageField& f, const std::string& path, bool float64) {
    ArrayHeader h{ArrayKind::Image, f.grid, float64 ? "float64" : "float32", 1};
    const auto bytes = encode_doubles(f.values, float64);
    write_container(path, h, bytes.data(), bytes.size());
}

void write_vector_field(const VectorField& f, const std::string& path, bool float64) {
    ArrayHeader h{ArrayKind::Vector, f.grid, float64 ? "float64" : "float32",
                  f.grid.ndim()};
    const auto bytes = encode_doubles(f.vectors, float64);
    write_container(path, h, bytes.data(), bytes.size());
}

void write_categorical(const CategoricalField& f, const std::string& path, bool float64) {
    ArrayHeader h{ArrayKind::Categorical, f.grid, float64 ? "float64" : "float32", f.K};
    const auto bytes = encode_doubles(f.probs, float64);
    write_container(path, h, bytes.data(), bytes.size());
}

void write_labels(const LabelField& f, const std::string& path) {
    ArrayHeader h{ArrayKind::Label, f.grid, "int32", 1};
    write_container(path, h, f.labels.data(), f.labels.size() * 4);
}

ArrayHeader peek_header(const std::string& path) { return read_container(path).header; }

ImageField read_image(const std::string& path) {
    const Container c = read_container(path);
    if (c.header.kind != ArrayKind::Image)
        throw std::runtime_error(path + ": expected image container");
    ImageField f;
    f.grid = c.header.grid;
    f.values = decode_doubles(c);
    return f;
}

VectorField read_vector_field(const std::string& path) {
    const Container c = read_container(path);
    if (c.header.kind != ArrayKind::Vector)
        throw std::runtime_error(path + ": expected vector container");
    if (c.header.channels != c.header.grid.ndim())
        throw std::runtime_error(path + ": vector channels != dimensionality");
    VectorField f;
    f.grid = c.header.grid;
    f.vectors = decode_doubles(c);
    return f;
}

CategoricalField read_categorical(const std::string& path) {
    const Container c = read_container(path);
    if (c.header.kind != ArrayKind::Categorical)
        throw std::runtime_error(path + ": expected categorical container");
    CategoricalField f(c.header.grid, c.header.channels);
    f.probs = decode_doubles(c);
    return f;
}

LabelField read_labels(const std::string& path) {
    const Container c = read_container(path);
    if (c.header.kind != ArrayKind::Label)
        throw std::runtime_error(path + ": expected label container");
    if (c.header.dtype != "int32")
        throw std::runtime_error(path + ": label payload must be int32");
    LabelField f;
    f.grid = c.header.grid;
    f.labels.resize(c.payload.size() / 4);
    std::memcpy(f.labels.data(), c.payload.data(), c.payload.size());
    int maxl = 0;
    for (int32_t l : f.labels) maxl = std::max(maxl, static_cast<int>(l));
    f.num_classes = maxl + 1;
    return f;
}

ImageField read_nifti(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);
    char hdr[348];
    is.read(hdr, 348);
    if (is.gcount() != 348) throw ParseError("header shorter than 348 bytes", 0);

    int32_t sizeof_hdr;
    std::memcpy(&sizeof_hdr, hdr, 4);
    if (sizeof_hdr != 348) throw ParseError("sizeof_hdr != 348", 0);
    if (!(hdr[344] == 'n' && (hdr[345] == '+' || hdr[345] == 'i') && hdr[346] == '1'))
        throw ParseError("bad magic string", 344);

    int16_t dim[8];
    std::memcpy(dim, hdr + 40, 16);
    if (dim[0] < 2 || dim[0] > 3)
        throw ParseError("only 2-D/3-D volumes supported", 40);
    float pixdim[8];
    std::memcpy(pixdim, hdr + 76, 32);
    int16_t datatype;
    std::memcpy(&datatype, hdr + 70, 2);
    float vox_offset_f, scl_slope, scl_inter;
    std::memcpy(&vox_offset_f, hdr + 108, 4);
    std::memcpy(&scl_slope, hdr + 112, 4);
    std::memcpy(&scl_inter, hdr + 116, 4);
    if (scl_slope == 0.0f) scl_slope = 1.0f;

    std::vector<int> dims;
    std::vector<double> spacing;
    for (int a = 0; a < dim[0]; ++a) {
        dims.push_back(dim[a + 1]);
        spacing.push_back(pixdim[a + 1] > 0 ? pixdim[a + 1] : 1.0);
    }
    ImageField f;
    f.grid = GridSpec(dims, spacing);
    const std::size_t n = f.grid.voxels();
    f.values.resize(n);

    const std::size_t offset =
        hdr[345] == '+' ? static_cast<std::size_t>(vox_offset_f) : 352;
    is.seekg(static_cast<std::streamoff>(offset));

    auto read_as = [&](auto tag) {
        using T = decltype(tag);
        std::vector<T> buf(n);
        is.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(n * sizeof(T)));
        if (static_cast<std::size_t>(is.gcount()) != n * sizeof(T))
            throw ParseError("truncated voxel payload", offset);
        for (std::size_t i = 0; i < n; ++i)
            f.values[i] = static_cast<double>(buf[i]) * scl_slope + scl_inter;
    };
    switch (datatype) {
        case 2: read_as(uint8_t{}); break;
        case 4: read_as(int16_t{}); break;
        case 8: read_as(int32_t{}); break;
        case 16: read_as(float{}); break;
        case 64: read_as(double{}); break;
        default: throw ParseError("unsupported datatype " + std::to_string(datatype), 70);
    }
    return f;
}

RunConfig RunConfig::from_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto eq = line.find('=');
        std::string trimmed = line;
        trimmed.erase(0, trimmed.find_first_not_of(" \t\r\n"));
        if (trimmed.empty()) continue;
        if (eq == std::string::npos)
            throw std::runtime_error("config line " + std::to_string(lineno) +
                                     ": expected key = value");
        auto strip = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r\n");
            const auto e = s.find_last_not_of(" \t\r\n");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = strip(line.substr(0, eq));
        const std::string value = strip(line.substr(eq + 1));
        if (key.empty())
            throw std::runtime_error("config line " + std::to_string(lineno) +
                                     ": empty key");
        cfg.entries[key] = value;
    }
    return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config: " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return from_text(ss.str());
}

std::string RunConfig::get_string(const std::string& key, const std::string& def) const {
    auto it = entries.find(key);
    return it == entries.end() ? def : it->second;
}

double RunConfig::get_double(const std::string& key, double def) const {
    auto it = entries.find(key);
    if (it == entries.end()) return def;
    try {
        return std::stod(it->second);
    } catch (...) {
        throw std::runtime_error("config field '" + key + "': not a number: " + it->second);
    }
}

int RunConfig::get_int(const std::string& key, int def) const {
    auto it = entries.find(key);
    if (it == entries.end()) return def;
    try {
        return std::stoi(it->second);
    } catch (...) {
        throw std::runtime_error("config field '" + key + "': not an integer: " +
                                 it->second);
    }
}

uint64_t RunConfig::get_u64(const std::string& key, uint64_t def) const {
    auto it = entries.find(key);
    if (it == entries.end()) return def;
    try {
        return std::stoull(it->second);
    } catch (...) {
        throw std::runtime_error("config field '" + key + "': not an integer: " +
                                 it->second);
    }
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os.precision(12);
    for (std::size_t i = 0; i < header.size(); ++i)
        os << header[i] << (i + 1 < header.size() ? "," : "\n");
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i)
            os << row[i] << (i + 1 < row.size() ? "," : "\n");
    }
}

}  // namespace groupreg
