use std::io::Write;
use std::path::Path;

use super::pca::fit_pca;
use super::{DefenseError, FeatureMatrix};

/// One exported point.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectedPoint {
    pub id: String,
    pub label: String,
    pub x: f64,
    pub y: f64,
}

/// First two principal coordinates of every row. Rank-1 data is padded
/// with a zero second coordinate.
pub fn project_2d<S: AsRef<str>>(ids: &[S], labels: &[S], x: &FeatureMatrix) -> Result<Vec<ProjectedPoint>, DefenseError> {
    if x.rows() < 3 {
        return Err(DefenseError::TooFewTrainingPoints { needed: 3, found: x.rows() });
    }
    if ids.len() != x.rows() || labels.len() != x.rows() {
        return Err(DefenseError::InvalidParameter("ids, labels and rows differ in length".into()));
    }
    let z = match fit_pca(x, 2.min(x.cols())) {
        Ok(m) => m.transform(x)?,
        Err(DefenseError::RankDeficient { .. }) => fit_pca(x, 1)?.transform(x)?,
        Err(e) => return Err(e),
    };
    Ok((0..x.rows())
        .map(|i| {
            let r = z.row(i);
            ProjectedPoint {
                id: ids[i].as_ref().to_string(),
                label: labels[i].as_ref().to_string(),
                x: r[0],
                y: r.get(1).copied().unwrap_or(0.0),
            }
        })
        .collect())
}

pub fn write_projection_csv<W: Write>(points: &[ProjectedPoint], out: W) -> Result<(), DefenseError> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| DefenseError::Io {
        path: "<projection>".into(),
        reason: e.to_string(),
    };
    w.write_record(["id", "label", "x", "y"]).map_err(io)?;
    for p in points {
        w.write_record([p.id.as_str(), p.label.as_str(), &p.x.to_string(), &p.y.to_string()])
            .map_err(io)?;
    }
    w.flush().map_err(|e| DefenseError::Io {
        path: "<projection>".into(),
        reason: e.to_string(),
    })
}

/// Projects to two principal components and writes `id,label,x,y` rows.
pub fn export_projection_2d<S: AsRef<str>>(ids: &[S], labels: &[S], x: &FeatureMatrix, path: &Path) -> Result<usize, DefenseError> {
    let points = project_2d(ids, labels, x)?;
    let f = std::fs::File::create(path).map_err(|e| DefenseError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    write_projection_csv(&points, std::io::BufWriter::new(f))?;
    Ok(points.len())
}
