use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use pdsim_core::Error;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_index: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<usize>,
}

/// An error response. The body always names a `field` or a `time_index`.
#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    fn with_field(status: StatusCode, field: impl Into<String>, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                error: message.into(),
                field: Some(field.into()),
                time_index: None,
                trajectory: None,
            },
        }
    }

    pub fn bad_request(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::with_field(StatusCode::BAD_REQUEST, field, message)
    }

    pub fn not_found(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::with_field(StatusCode::NOT_FOUND, field, message)
    }

    pub fn internal(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::with_field(StatusCode::INTERNAL_SERVER_ERROR, field, message)
    }

    pub fn from_path_error(err: serde_path_to_error::Error<serde_json::Error>) -> Self {
        let inner = err.inner();
        if inner.is_syntax() || inner.is_eof() || inner.is_io() {
            return Self::bad_request("body", inner.to_string());
        }
        let path = err.path().to_string();
        let field = if path == "." { "body".to_string() } else { path };
        Self::with_field(StatusCode::UNPROCESSABLE_ENTITY, field, inner.to_string())
    }
}

impl From<Error> for ApiError {
    fn from(err: Error) -> Self {
        let trajectory = match &err {
            Error::Trajectory { trajectory, .. } => Some(*trajectory),
            _ => None,
        };
        let (status, field, time_index) = if err.is_numerical() {
            let t = err.time_index();
            let field = t.is_none().then(|| "covariance".to_string());
            (StatusCode::INTERNAL_SERVER_ERROR, field, t)
        } else {
            (StatusCode::BAD_REQUEST, err.field().map(str::to_string), None)
        };
        ApiError {
            status,
            body: ErrorBody {
                error: err.to_string(),
                field,
                time_index,
                trajectory,
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numerical_failures_carry_time_index() {
        let err = ApiError::from(Error::numerical(7, "innovation covariance"));
        assert_eq!(err.status, StatusCode::INTERNAL_SERVER_ERROR);
        assert_eq!(err.body.time_index, Some(7));
        let wrapped = ApiError::from(Error::Trajectory {
            trajectory: 3,
            source: Box::new(Error::numerical(2, "x")),
        });
        assert_eq!(wrapped.body.time_index, Some(2));
        assert_eq!(wrapped.body.trajectory, Some(3));
        let pd = ApiError::from(Error::NotPositiveDefinite { pivot: 1 });
        assert_eq!(pd.body.field.as_deref(), Some("covariance"));
    }

    #[test]
    fn validation_errors_carry_field() {
        let err = ApiError::from(Error::invalid("rho", "must lie in (-1, 1)"));
        assert_eq!(err.status, StatusCode::BAD_REQUEST);
        assert_eq!(err.body.field.as_deref(), Some("rho"));
        let text = serde_json::to_string(&err.body).unwrap();
        assert!(!text.contains("time_index"));
    }
}
