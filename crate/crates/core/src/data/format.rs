use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sim::TICK_HZ;
use crate::tactile::{TAXELS, TAXELS_PER_FINGER};

pub const DATASET_VERSION: u32 = 1;
const MAGIC: &str = "# tactigrasp-dataset";
/// t_tick, S, θ, P, dS, dθ, label.
pub const FIELDS_PER_FRAME: usize = 1 + TAXELS + 1 + 7 + TAXELS + 1 + 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DatasetKind {
    /// Initial-grasp demonstrations.
    Gp,
    /// Labeled stable/unstable grasps.
    Stab,
    /// Adaptation demonstrations with expert angle corrections.
    Ga,
}

impl DatasetKind {
    pub const ALL: [DatasetKind; 3] = [DatasetKind::Gp, DatasetKind::Stab, DatasetKind::Ga];

    pub fn as_str(self) -> &'static str {
        match self {
            DatasetKind::Gp => "gp",
            DatasetKind::Stab => "stab",
            DatasetKind::Ga => "ga",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Label {
    Stable,
    Unstable,
    Na,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Stable => "stable",
            Label::Unstable => "unstable",
            Label::Na => "na",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "stable" => Some(Label::Stable),
            "unstable" => Some(Label::Unstable),
            "na" | "n/a" => Some(Label::Na),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetHeader {
    pub version: u32,
    pub rate_hz: u32,
    pub taxels_per_finger: usize,
    pub kind: DatasetKind,
    pub object: String,
    pub seed: u64,
}

impl DatasetHeader {
    pub fn new(kind: DatasetKind, object: impl Into<String>, seed: u64) -> Self {
        Self {
            version: DATASET_VERSION,
            rate_hz: TICK_HZ as u32,
            taxels_per_finger: TAXELS_PER_FINGER,
            kind,
            object: object.into(),
            seed,
        }
    }

    fn line(&self) -> String {
        format!(
            "{MAGIC} version={} rate_hz={} taxels_per_finger={} kind={} object={} seed={}",
            self.version,
            self.rate_hz,
            self.taxels_per_finger,
            self.kind.as_str(),
            self.object,
            self.seed
        )
    }

    fn parse(line: &str) -> Result<Self> {
        let err = |reason: String| Error::Parse { line: 1, reason };
        let rest = line
            .strip_prefix(MAGIC)
            .ok_or_else(|| err(format!("missing {MAGIC:?} header")))?;
        let mut version = None;
        let mut rate = None;
        let mut tpf = None;
        let mut kind = None;
        let mut object = None;
        let mut seed = None;
        for kv in rest.split_whitespace() {
            let (k, v) = kv.split_once('=').ok_or_else(|| err(format!("bad header token {kv:?}")))?;
            let num = |v: &str| v.parse::<u64>().map_err(|_| err(format!("header {k}={v:?} is not an integer")));
            match k {
                "version" => version = Some(num(v)?),
                "rate_hz" => rate = Some(num(v)?),
                "taxels_per_finger" => tpf = Some(num(v)?),
                "kind" => kind = Some(DatasetKind::parse(v).ok_or_else(|| err(format!("unknown kind {v:?}")))?),
                "object" => object = Some(v.to_string()),
                "seed" => seed = Some(num(v)?),
                _ => return Err(err(format!("unknown header key {k:?}"))),
            }
        }
        let need = |name: &str| err(format!("header lacks {name}"));
        let version = version.ok_or_else(|| need("version"))?;
        if version != u64::from(DATASET_VERSION) {
            return Err(err(format!("version {version} is not supported (expected {DATASET_VERSION})")));
        }
        let rate_hz = rate.ok_or_else(|| need("rate_hz"))?;
        if rate_hz != TICK_HZ as u64 {
            return Err(err(format!("rate_hz {rate_hz}, expected {}", TICK_HZ as u64)));
        }
        let taxels_per_finger = tpf.ok_or_else(|| need("taxels_per_finger"))? as usize;
        if taxels_per_finger != TAXELS_PER_FINGER {
            return Err(err(format!(
                "taxels_per_finger {taxels_per_finger}, expected {TAXELS_PER_FINGER}"
            )));
        }
        Ok(Self {
            version: DATASET_VERSION,
            rate_hz: rate_hz as u32,
            taxels_per_finger,
            kind: kind.ok_or_else(|| need("kind"))?,
            object: object.ok_or_else(|| need("object"))?,
            seed: seed.ok_or_else(|| need("seed"))?,
        })
    }
}

/// One recorded 160 Hz frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub t_tick: u64,
    pub s: [f64; TAXELS],
    pub theta_deg: f64,
    pub pose: [f64; 7],
    /// `S` minus the previous tick's `S`.
    pub ds: [f64; TAXELS],
    /// Angle change: measured for `gp`/`stab`, the expert's correction for `ga`.
    pub dtheta_deg: f64,
    pub label: Label,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub header: DatasetHeader,
    pub frames: Vec<Frame>,
}

impl Episode {
    /// Relative path under a data root: `<kind>/<object>_<seed>.tsv`.
    pub fn file_name(&self) -> String {
        format!("{}/{}_{}.tsv", self.header.kind.as_str(), self.header.object, self.header.seed)
    }
}

/// Shortest decimal that round-trips the value rounded to 9 significant digits.
pub fn fmt_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{v:.8e}").parse().expect("valid float literal");
    format!("{rounded}")
}

/// The value as it reads back after [`fmt_sig9`].
pub fn round_sig9(v: f64) -> f64 {
    fmt_sig9(v).parse().expect("valid float literal")
}

impl Frame {
    /// Copy with every number rounded the way the file stores it.
    pub fn rounded(&self) -> Frame {
        let mut f = self.clone();
        f.s.iter_mut().chain(f.ds.iter_mut()).chain(f.pose.iter_mut()).for_each(|v| *v = round_sig9(*v));
        f.theta_deg = round_sig9(f.theta_deg);
        f.dtheta_deg = round_sig9(f.dtheta_deg);
        f
    }

    fn write_line(&self, out: &mut String) {
        let _ = write!(out, "{}", self.t_tick);
        for v in self
            .s
            .iter()
            .chain(std::iter::once(&self.theta_deg))
            .chain(&self.pose)
            .chain(&self.ds)
            .chain(std::iter::once(&self.dtheta_deg))
        {
            out.push('\t');
            out.push_str(&fmt_sig9(*v));
        }
        out.push('\t');
        out.push_str(self.label.as_str());
        out.push('\n');
    }

    fn parse_line(line: &str, lineno: usize) -> Result<Frame> {
        let err = |reason: String| Error::Parse { line: lineno, reason };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != FIELDS_PER_FRAME {
            return Err(err(format!("expected {FIELDS_PER_FRAME} fields, found {}", fields.len())));
        }
        let t_tick = fields[0]
            .parse()
            .map_err(|_| err(format!("bad tick {:?}", fields[0])))?;
        let mut nums = [0.0; FIELDS_PER_FRAME - 2];
        for (i, (slot, raw)) in nums.iter_mut().zip(&fields[1..FIELDS_PER_FRAME - 1]).enumerate() {
            *slot = raw
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| err(format!("field {} is not a finite number: {raw:?}", i + 2)))?;
        }
        let label_raw = fields[FIELDS_PER_FRAME - 1];
        let label = Label::parse(label_raw).ok_or_else(|| err(format!("unknown label {label_raw:?}")))?;
        let mut f = Frame {
            t_tick,
            s: [0.0; TAXELS],
            theta_deg: nums[TAXELS],
            pose: [0.0; 7],
            ds: [0.0; TAXELS],
            dtheta_deg: nums[2 * TAXELS + 8],
            label,
        };
        f.s.copy_from_slice(&nums[..TAXELS]);
        f.pose.copy_from_slice(&nums[TAXELS + 1..TAXELS + 8]);
        f.ds.copy_from_slice(&nums[TAXELS + 8..2 * TAXELS + 8]);
        Ok(f)
    }
}

pub fn dataset_to_string(header: &DatasetHeader, frames: &[Frame]) -> String {
    let mut out = String::with_capacity(64 + frames.len() * FIELDS_PER_FRAME * 12);
    out.push_str(&header.line());
    out.push('\n');
    for f in frames {
        f.write_line(&mut out);
    }
    out
}

/// Parse a dataset, checking the header, field counts and tick continuity.
pub fn parse_dataset(text: &str) -> Result<Episode> {
    if text.is_empty() {
        return Err(Error::Parse {
            line: 1,
            reason: "empty file".into(),
        });
    }
    if !text.ends_with('\n') {
        let line = text.lines().count();
        return Err(Error::Parse {
            line,
            reason: "truncated: last line has no terminator".into(),
        });
    }
    let mut lines = text.lines();
    let header = DatasetHeader::parse(lines.next().unwrap_or_default())?;
    let mut frames: Vec<Frame> = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let f = Frame::parse_line(line, lineno)?;
        if let Some(prev) = frames.last() {
            if f.t_tick != prev.t_tick + 1 {
                return Err(Error::Parse {
                    line: lineno,
                    reason: format!("tick {} does not follow {}", f.t_tick, prev.t_tick),
                });
            }
        }
        frames.push(f);
    }
    Ok(Episode { header, frames })
}

pub fn write_dataset(path: &Path, header: &DatasetHeader, frames: &[Frame]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, dataset_to_string(header, frames))?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Episode> {
    parse_dataset(&fs::read_to_string(path)?)
}

/// Semantic checks beyond parsing: value ranges, unit quaternion and
/// `dS_k = S_k - S_{k-1}`. Returns the first violation.
pub fn validate_episode(ep: &Episode) -> Result<()> {
    for (k, f) in ep.frames.iter().enumerate() {
        let line = k + 2;
        let bad = |reason: String| Err(Error::Parse { line, reason });
        if let Some(i) = f.s.iter().position(|v| *v < 0.0) {
            return bad(format!("taxel {i} is negative"));
        }
        if !(0.0..=90.0).contains(&f.theta_deg) {
            return bad(format!("theta {} outside [0, 90]", f.theta_deg));
        }
        let qn = f.pose[3..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if (qn - 1.0).abs() > 1e-6 {
            return bad(format!("pose quaternion norm {qn}"));
        }
        if k > 0 {
            let prev = &ep.frames[k - 1];
            if f.t_tick != prev.t_tick + 1 {
                return bad(format!("tick {} does not follow {}", f.t_tick, prev.t_tick));
            }
            for i in 0..TAXELS {
                let expect = f.s[i] - prev.s[i];
                let tol = 1e-7 * (1.0 + f.s[i].abs() + prev.s[i].abs());
                if (f.ds[i] - expect).abs() > tol {
                    return bad(format!("dS[{i}] = {} but S changed by {expect}", f.ds[i]));
                }
            }
        }
    }
    Ok(())
}

/// Read and validate one file.
pub fn validate_file(path: &Path) -> Result<Episode> {
    let ep = read_dataset(path)?;
    validate_episode(&ep)?;
    Ok(ep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::TOP_GRASP_POSE;

    fn frames(n: usize) -> Vec<Frame> {
        let mut out: Vec<Frame> = Vec::new();
        for t in 0..n {
            let mut s = [0.0; TAXELS];
            for (i, v) in s.iter_mut().enumerate() {
                *v = (t * 7 + i) as f64 / 3.0;
            }
            let ds = match out.last() {
                Some(p) => {
                    let mut d = [0.0; TAXELS];
                    for i in 0..TAXELS {
                        d[i] = s[i] - p.s[i];
                    }
                    d
                }
                None => [0.0; TAXELS],
            };
            out.push(
                Frame {
                    t_tick: 10 + t as u64,
                    s,
                    theta_deg: 20.0 + t as f64 * 0.1875,
                    pose: TOP_GRASP_POSE,
                    ds,
                    dtheta_deg: 0.1875,
                    label: if t % 2 == 0 { Label::Stable } else { Label::Na },
                }
                .rounded(),
            );
        }
        out
    }

    #[test]
    fn empty_episode_round_trip() {
        let h = DatasetHeader::new(DatasetKind::Gp, "ink", 3);
        let text = dataset_to_string(&h, &[]);
        assert_eq!(text.lines().count(), 1);
        let ep = parse_dataset(&text).unwrap();
        assert_eq!(ep.header, h);
        assert!(ep.frames.is_empty());
    }

    #[test]
    fn hundred_frames_round_trip() {
        let h = DatasetHeader::new(DatasetKind::Ga, "milk_bottle", 42);
        let fs = frames(100);
        let ep = parse_dataset(&dataset_to_string(&h, &fs)).unwrap();
        assert_eq!(ep.frames, fs);
        validate_episode(&ep).unwrap();
    }

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt_sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt_sig9(123456789.4), "123456789");
        assert_eq!(fmt_sig9(-2.5e-12), "-0.0000000000025");
        assert_eq!(fmt_sig9(0.1875), "0.1875");
    }

    #[test]
    fn tick_gap_reports_line() {
        let h = DatasetHeader::new(DatasetKind::Stab, "ink", 1);
        let mut fs = frames(3);
        fs[2].t_tick += 1;
        let err = parse_dataset(&dataset_to_string(&h, &fs)).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err}");
    }

    #[test]
    fn header_and_shape_errors() {
        let h = DatasetHeader::new(DatasetKind::Stab, "ink", 1);
        let text = dataset_to_string(&h, &frames(2)).replace("version=1", "version=2");
        assert!(matches!(parse_dataset(&text), Err(Error::Parse { line: 1, .. })));

        let text = dataset_to_string(&h, &frames(2));
        let cut = &text[..text.len() - 5];
        assert!(matches!(parse_dataset(cut), Err(Error::Parse { line: 3, .. })));

        let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
        let last = lines[2].rfind('\t').unwrap();
        let dropped_field = lines[2][..last].rfind('\t').unwrap();
        lines[2] = format!("{}{}", &lines[2][..dropped_field], &lines[2][last..]);
        let text = lines.join("\n") + "\n";
        assert!(matches!(parse_dataset(&text), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn validate_rejects_sign_flip() {
        let h = DatasetHeader::new(DatasetKind::Gp, "ink", 1);
        let mut ep = Episode {
            header: h,
            frames: frames(5),
        };
        validate_episode(&ep).unwrap();
        ep.frames[3].ds[4] = -ep.frames[3].ds[4];
        assert!(matches!(validate_episode(&ep), Err(Error::Parse { line: 5, .. })));
    }
}
