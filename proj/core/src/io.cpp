#include "tsgrid/io.hpp"

#include "tsgrid/value.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

namespace tsgrid::io {

namespace {

[[noreturn]] void err_at(int line, const std::string& msg) {
    fail(Errc::parse_error, "line " + std::to_string(line) + ": " + msg);
}

std::string trimmed(const std::string& s) {
    size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

Value parse_value_field(const std::string& raw, int line) {
    std::string t = trimmed(raw);
    if (t.empty() || t == "!") return Value::empty();
    if (t == "?") return Value::unknown();
    const char* begin = t.c_str();
    char* end = nullptr;
    double d = std::strtod(begin, &end);
    if (end != begin + t.size()) err_at(line, "not a number: \"" + t + "\"");
    return Value::real(d);
}

Timestamp parse_date_field(const std::string& raw, int line) {
    try {
        return parse_timestamp(trimmed(raw));
    } catch (const Error& e) {
        err_at(line, e.what());
    }
}

// Minimal namespace-aware XML reader, just enough for the fixed document
// layout: elements, attributes, character data, comments, the five named
// entities. Tracks line numbers for error reports.
struct XmlNode {
    std::string uri;
    std::string local;
    std::string text;
    std::vector<XmlNode> children;
    int line = 1;
};

class XmlParser {
public:
    explicit XmlParser(std::string text) : s_(std::move(text)) {
        if (s_.size() >= 3 && s_.compare(0, 3, "\xef\xbb\xbf") == 0) i_ = 3;
    }

    XmlNode parse_document() {
        skip_misc();
        if (eof()) err("empty document");
        std::map<std::string, std::string> ns;
        ns[""] = "";
        XmlNode root = parse_element(ns);
        skip_misc();
        if (!eof()) err("content after the document element");
        return root;
    }

private:
    bool eof() const { return i_ >= s_.size(); }
    char peek() const { return s_[i_]; }
    char take() {
        char c = s_[i_++];
        if (c == '\n') ++line_;
        return c;
    }
    bool starts_with(const char* p) const { return s_.compare(i_, std::strlen(p), p) == 0; }
    void expect(char c) {
        if (eof() || peek() != c) err(std::string("expected '") + c + "'");
        take();
    }
    [[noreturn]] void err(const std::string& m) const { err_at(line_, m); }

    void skip_ws() {
        while (!eof() && std::isspace(static_cast<unsigned char>(peek()))) take();
    }

    void skip_misc() {
        for (;;) {
            skip_ws();
            if (starts_with("<?")) {
                while (!eof() && !starts_with("?>")) take();
                if (eof()) err("unterminated processing instruction");
                take();
                take();
            } else if (starts_with("<!--")) {
                while (!eof() && !starts_with("-->")) take();
                if (eof()) err("unterminated comment");
                take();
                take();
                take();
            } else {
                return;
            }
        }
    }

    static bool name_char(char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' ||
               c == '.' || c == ':';
    }

    std::string parse_name() {
        std::string out;
        while (!eof() && name_char(peek())) out.push_back(take());
        if (out.empty()) err("expected a name");
        return out;
    }

    std::string parse_attr_value() {
        if (eof() || (peek() != '"' && peek() != '\'')) err("expected a quoted value");
        char q = take();
        std::string raw;
        while (!eof() && peek() != q) raw.push_back(take());
        if (eof()) err("unterminated attribute value");
        take();
        return decode_entities(raw);
    }

    std::string decode_entities(const std::string& raw) {
        std::string out;
        for (size_t k = 0; k < raw.size(); ++k) {
            if (raw[k] != '&') {
                out.push_back(raw[k]);
                continue;
            }
            size_t semi = raw.find(';', k);
            if (semi == std::string::npos) err("unterminated entity");
            std::string name = raw.substr(k + 1, semi - k - 1);
            if (name == "amp")
                out.push_back('&');
            else if (name == "lt")
                out.push_back('<');
            else if (name == "gt")
                out.push_back('>');
            else if (name == "quot")
                out.push_back('"');
            else if (name == "apos")
                out.push_back('\'');
            else
                err("unknown entity &" + name + ";");
            k = semi;
        }
        return out;
    }

    void resolve(const std::string& qname, const std::map<std::string, std::string>& ns,
                 XmlNode& node) {
        size_t colon = qname.find(':');
        std::string prefix = colon == std::string::npos ? "" : qname.substr(0, colon);
        node.local = colon == std::string::npos ? qname : qname.substr(colon + 1);
        auto it = ns.find(prefix);
        if (it == ns.end()) err("undeclared namespace prefix \"" + prefix + "\"");
        node.uri = it->second;
    }

    XmlNode parse_element(std::map<std::string, std::string> ns) {
        expect('<');
        XmlNode node;
        node.line = line_;
        std::string qname = parse_name();

        bool self_closing = false;
        for (;;) {
            skip_ws();
            if (eof()) err("unterminated start tag");
            if (peek() == '>') {
                take();
                break;
            }
            if (starts_with("/>")) {
                take();
                take();
                self_closing = true;
                break;
            }
            std::string attr = parse_name();
            skip_ws();
            expect('=');
            skip_ws();
            std::string value = parse_attr_value();
            if (attr == "xmlns")
                ns[""] = value;
            else if (attr.rfind("xmlns:", 0) == 0)
                ns[attr.substr(6)] = value;
            // other attributes are tolerated and ignored
        }
        resolve(qname, ns, node);
        if (self_closing) return node;

        std::string text;
        for (;;) {
            if (eof()) err("unterminated element <" + qname + ">");
            if (starts_with("<!--")) {
                skip_misc();
                continue;
            }
            if (starts_with("</")) {
                take();
                take();
                std::string end = parse_name();
                if (end != qname)
                    err("mismatched end tag </" + end + "> for <" + qname + ">");
                skip_ws();
                expect('>');
                break;
            }
            if (peek() == '<') {
                node.children.push_back(parse_element(ns));
                continue;
            }
            std::string raw;
            while (!eof() && peek() != '<') raw.push_back(take());
            text += decode_entities(raw);
        }
        node.text = text;
        return node;
    }

    std::string s_;
    size_t i_ = 0;
    int line_ = 1;
};

const XmlNode& only_child(const XmlNode& parent, const char* local) {
    const XmlNode* found = nullptr;
    for (const XmlNode& c : parent.children) {
        if (c.uri != kXmlNamespace || c.local != local) continue;
        if (found) err_at(c.line, std::string("duplicate <") + local + "> element");
        found = &c;
    }
    if (!found)
        err_at(parent.line, std::string("missing <") + local + "> element");
    return *found;
}

std::string slurp(std::istream& in) {
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

} // namespace

std::vector<RawPoint> read_xml(std::istream& in) {
    XmlParser parser(slurp(in));
    XmlNode root = parser.parse_document();
    if (root.uri != kXmlNamespace || root.local != "document")
        err_at(root.line, "expected the document element in namespace " +
                              std::string(kXmlNamespace));
    std::vector<RawPoint> out;
    for (const XmlNode& entry : root.children) {
        if (entry.uri != kXmlNamespace || entry.local != "timeseries")
            err_at(entry.line, "expected a <timeseries> element");
        const XmlNode& date = only_child(entry, "date");
        const XmlNode& value = only_child(entry, "value");
        out.push_back({parse_date_field(date.text, date.line),
                       parse_value_field(value.text, value.line)});
    }
    return out;
}

std::vector<RawPoint> read_csv(std::istream& in) {
    std::vector<RawPoint> out;
    std::string line;
    int lineno = 0;
    bool first_data = true;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trimmed(line).empty()) continue;
        std::vector<std::string> fields;
        size_t pos = 0;
        for (;;) {
            size_t comma = line.find(',', pos);
            fields.push_back(line.substr(pos, comma - pos));
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        if (fields.size() != 2)
            fail(Errc::bad_column_count, "line " + std::to_string(lineno) + ": expected " +
                                             "2 columns, got " +
                                             std::to_string(fields.size()));
        if (first_data) {
            first_data = false;
            // a non-date first row is a header
            try {
                parse_timestamp(trimmed(fields[0]));
            } catch (const Error&) {
                continue;
            }
        }
        out.push_back({parse_date_field(fields[0], lineno),
                       parse_value_field(fields[1], lineno)});
    }
    return out;
}

TimeSeries grid_points(const std::vector<RawPoint>& pts, std::optional<Granularity> g) {
    if (pts.empty()) fail(Errc::parse_error, "file contains no data rows");
    for (size_t i = 1; i < pts.size(); ++i) {
        if (pts[i].t == pts[i - 1].t)
            fail(Errc::duplicate_date, format_timestamp(pts[i].t) + " appears twice");
        if (pts[i].t < pts[i - 1].t)
            fail(Errc::non_monotone_dates,
                 format_timestamp(pts[i].t) + " comes after " +
                     format_timestamp(pts[i - 1].t));
    }

    Granularity gran;
    if (g) {
        gran = *g;
    } else if (pts.size() == 1) {
        gran = Granularity::day;
    } else {
        int64_t gcd = 0;
        for (size_t i = 1; i < pts.size(); ++i)
            gcd = std::gcd(gcd, pts[i].t.secs - pts[i - 1].t.secs);
        gran = Granularity::second;
        for (Granularity cand : {Granularity::week, Granularity::day, Granularity::hour,
                                 Granularity::minute}) {
            if (gcd % granularity_seconds(cand) == 0) {
                gran = cand;
                break;
            }
        }
    }

    Calendar probe(pts.front().t, gran, 0);
    int64_t n = probe.grid_index(pts.back().t) + 1; // throws OffGrid on override mismatch
    Calendar calendar(pts.front().t, gran, n);
    std::vector<Value> vals(static_cast<size_t>(n), Value::empty());
    for (const RawPoint& p : pts)
        vals[static_cast<size_t>(calendar.grid_index(p.t))] = p.v;
    return TimeSeries(std::move(calendar), std::move(vals));
}

namespace {

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::config_error, "cannot open " + path);
    return in;
}

bool has_xml_extension(const std::string& path) {
    if (path.size() < 4) return false;
    std::string ext = path.substr(path.size() - 4);
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return ext == ".xml";
}

} // namespace

TimeSeries load_xml(const std::string& path, std::optional<Granularity> g) {
    std::ifstream in = open_input(path);
    return grid_points(read_xml(in), g);
}

TimeSeries load_csv(const std::string& path, std::optional<Granularity> g) {
    std::ifstream in = open_input(path);
    return grid_points(read_csv(in), g);
}

TimeSeries load_series_file(const std::string& path, std::optional<Granularity> g) {
    return has_xml_extension(path) ? load_xml(path, g) : load_csv(path, g);
}

namespace {
std::string value_field(Value v) {
    if (v.is_empty()) return "";
    if (v.is_unknown()) return "?";
    return format_double(v.as_real());
}
} // namespace

void write_xml(std::ostream& out, const TimeSeries& s) {
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out << "<ts:document xmlns:ts=\"" << kXmlNamespace << "\">\n";
    for (int64_t i = 0; i < s.length(); ++i) {
        out << "  <ts:timeseries>\n";
        out << "    <ts:date>" << format_timestamp(s.calendar().grid_time(i))
            << "</ts:date>\n";
        out << "    <ts:value>" << value_field(s.at(i)) << "</ts:value>\n";
        out << "  </ts:timeseries>\n";
    }
    out << "</ts:document>\n";
}

void write_csv(std::ostream& out, const TimeSeries& s) {
    out << "date,value\n";
    for (int64_t i = 0; i < s.length(); ++i)
        out << format_timestamp(s.calendar().grid_time(i)) << "," << value_field(s.at(i))
            << "\n";
}

void save_series_file(const std::string& path, const TimeSeries& s) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(Errc::config_error, "cannot open " + path + " for writing");
    if (has_xml_extension(path))
        write_xml(out, s);
    else
        write_csv(out, s);
}

} // namespace tsgrid::io
