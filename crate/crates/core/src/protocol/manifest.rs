use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{MediaRecord, ProtocolError};
use crate::geometry::{LandmarkSchema, LandmarkSet};

pub const MANIFEST_COLUMNS: [&str; 11] = [
    "image_id",
    "template_id",
    "subject_id",
    "filepath",
    "bbox_x",
    "bbox_y",
    "bbox_w",
    "bbox_h",
    "pose_bucket",
    "lmk_schema",
    "lmk_points",
];

fn parse_points(text: &str) -> Result<Vec<[f64; 2]>, String> {
    text.split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|pair| {
            let (x, y) = pair
                .split_once(':')
                .ok_or_else(|| format!("landmark {pair:?} is not x:y"))?;
            let x: f64 = x.trim().parse().map_err(|_| format!("bad x in {pair:?}"))?;
            let y: f64 = y.trim().parse().map_err(|_| format!("bad y in {pair:?}"))?;
            Ok([x, y])
        })
        .collect()
}

fn parse_row(row: &csv::StringRecord) -> Result<MediaRecord, String> {
    let field = |i: usize| row.get(i).map(str::trim).unwrap_or("");
    let required = |i: usize| {
        let v = field(i);
        if v.is_empty() {
            Err(format!("missing {}", MANIFEST_COLUMNS[i]))
        } else {
            Ok(v.to_string())
        }
    };
    let image_id = required(0)?;
    let template_id = required(1)?;
    let subject_id = required(2)?;
    let filepath = required(3)?.into();

    let bbox_fields: Vec<&str> = (4..8).map(field).collect();
    let bbox = if bbox_fields.iter().all(|f| f.is_empty()) {
        None
    } else {
        let mut b = [0.0; 4];
        for (k, f) in bbox_fields.iter().enumerate() {
            b[k] = f
                .parse()
                .map_err(|_| format!("bad or missing {} {f:?}", MANIFEST_COLUMNS[4 + k]))?;
        }
        Some(b)
    };
    let pose_bucket = Some(field(8).to_string()).filter(|s| !s.is_empty());
    let landmarks = match (field(9), field(10)) {
        ("", "") => None,
        ("", _) => return Err("lmk_points given without lmk_schema".into()),
        (_, "") => return Err("lmk_schema given without lmk_points".into()),
        (schema, points) => {
            let schema: LandmarkSchema = schema.parse().unwrap();
            let points = parse_points(points)?;
            Some(LandmarkSet::new(schema, points).map_err(|e| e.to_string())?)
        }
    };
    Ok(MediaRecord {
        image_id,
        template_id,
        subject_id,
        filepath,
        bbox,
        pose_bucket,
        landmarks,
    })
}

/// Parses manifest CSV text. `source` names the input in error messages.
pub fn read_manifest<R: Read>(reader: R, source: &str) -> Result<Vec<MediaRecord>, ProtocolError> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let parse_err = |line: u64, message: String| ProtocolError::Parse {
        path: source.to_string(),
        line,
        message,
    };
    let headers = csv.headers()?.clone();
    let trimmed: Vec<&str> = headers.iter().map(str::trim).collect();
    if trimmed != MANIFEST_COLUMNS {
        return Err(parse_err(
            1,
            format!("expected header {:?}", MANIFEST_COLUMNS.join(",")),
        ));
    }
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for row in csv.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != MANIFEST_COLUMNS.len() {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", MANIFEST_COLUMNS.len(), row.len()),
            ));
        }
        let rec = parse_row(&row).map_err(|m| parse_err(line, m))?;
        if !seen.insert(rec.image_id.clone()) {
            return Err(ProtocolError::DuplicateImageId(rec.image_id));
        }
        records.push(rec);
    }
    Ok(records)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<MediaRecord>, ProtocolError> {
    let path = path.as_ref();
    read_manifest(File::open(path)?, &path.display().to_string())
}

/// Writes records in the manifest CSV layout. Floats use the shortest
/// representation that parses back to the same value.
pub fn write_manifest<W: Write>(writer: W, records: &[MediaRecord]) -> Result<(), ProtocolError> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(MANIFEST_COLUMNS)?;
    for r in records {
        let bbox: Vec<String> = match r.bbox {
            Some(b) => b.iter().map(|v| v.to_string()).collect(),
            None => vec![String::new(); 4],
        };
        let (schema, points) = match &r.landmarks {
            Some(lm) => (
                lm.schema().id().to_string(),
                lm.points()
                    .iter()
                    .map(|p| format!("{}:{}", p[0], p[1]))
                    .collect::<Vec<_>>()
                    .join(";"),
            ),
            None => (String::new(), String::new()),
        };
        let filepath = r.filepath.to_string_lossy();
        let mut row = vec![
            r.image_id.as_str(),
            r.template_id.as_str(),
            r.subject_id.as_str(),
            filepath.as_ref(),
        ];
        row.extend(bbox.iter().map(String::as_str));
        row.push(r.pose_bucket.as_deref().unwrap_or(""));
        row.push(&schema);
        row.push(&points);
        csv.write_record(&row)?;
    }
    csv.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::tests::record;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const HEADER: &str = "image_id,template_id,subject_id,filepath,bbox_x,bbox_y,bbox_w,bbox_h,pose_bucket,lmk_schema,lmk_points\n";

    #[test]
    fn reads_well_formed_rows() {
        let text = format!(
            "{HEADER}a,T1,S1,img/a.png,1,2,30,40,frontal,5pt,1:2;3:4;5:6;7:8;9:10\n\
             b,T1,S1,img/b.png,,,,,,,\n\
             c,T2,S2,img/c.png,,,,,profile,,\n"
        );
        let recs = read_manifest(text.as_bytes(), "m.csv").unwrap();
        assert_eq!(recs.len(), 3);
        assert_eq!(recs[0].bbox, Some([1.0, 2.0, 30.0, 40.0]));
        assert_eq!(recs[0].landmarks.as_ref().unwrap().points()[4], [9.0, 10.0]);
        assert_eq!(recs[1].landmarks, None);
        assert_eq!(recs[2].pose_bucket.as_deref(), Some("profile"));
    }

    #[test]
    fn missing_subject_names_the_row() {
        let text = format!("{HEADER}a,T1,S1,a.png,,,,,,,\nb,T1,,b.png,,,,,,,\n");
        match read_manifest(text.as_bytes(), "m.csv") {
            Err(ProtocolError::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("subject_id"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_duplicates_and_partial_annotations() {
        let text = format!("{HEADER}a,T1,S1,a.png,,,,,,,\na,T2,S2,b.png,,,,,,,\n");
        assert!(matches!(
            read_manifest(text.as_bytes(), "m"),
            Err(ProtocolError::DuplicateImageId(_))
        ));
        for bad in [
            "a,T,S,a.png,1,2,3,,,,\n",
            "a,T,S,a.png,,,,,,5pt,\n",
            "a,T,S,a.png,,,,,,5pt,1:2;3:4\n",
            "a,T,S,a.png,,,,,,,\n,,\n",
        ] {
            let text = format!("{HEADER}{bad}");
            assert!(read_manifest(text.as_bytes(), "m").is_err(), "{bad}");
        }
        assert!(read_manifest("id,x\n".as_bytes(), "m").is_err());
    }

    #[test]
    fn write_then_read_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let records: Vec<MediaRecord> = (0..50)
            .map(|i| {
                let mut r = record(&format!("img,{i}"), &format!("T{}", i % 5), &format!("S \"{}\"", i % 5));
                if i % 2 == 0 {
                    r.bbox = Some([rng.random(), rng.random_range(-1e3..1e3), 1e-300, 12.5]);
                }
                if i % 3 == 0 {
                    r.pose_bucket = Some("profile".into());
                    r.landmarks = Some(
                        LandmarkSet::new(
                            LandmarkSchema::FivePoint,
                            (0..5).map(|_| [rng.random_range(0.0..500.0), rng.random()]).collect(),
                        )
                        .unwrap(),
                    );
                }
                r
            })
            .collect();
        let mut buf = Vec::new();
        write_manifest(&mut buf, &records).unwrap();
        let back = read_manifest(&buf[..], "mem").unwrap();
        assert_eq!(back, records);
    }
}
