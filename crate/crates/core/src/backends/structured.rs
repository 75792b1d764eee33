use super::{TextClient, TextRequest, TextResponse};
use crate::error::{Error, Result};

/// The JSON object inside a model reply, tolerating code fences and prose
/// around it.
pub fn extract_json(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let end = text.rfind('}')?;
    (end > start).then(|| &text[start..=end])
}

/// Sends `request`, parses the reply with `parse`, and on failure reprompts
/// once with the parse error before giving up with `MalformedOutput`.
///
/// Returns the parsed value together with every raw response, so callers
/// can account for backend latency.
pub fn complete_structured<T>(
    client: &dyn TextClient,
    request: &TextRequest,
    parse: impl Fn(&str) -> std::result::Result<T, String>,
) -> Result<(T, Vec<TextResponse>)> {
    let first = client.complete(request)?;
    let reason = match parse(&first.text) {
        Ok(v) => return Ok((v, vec![first])),
        Err(reason) => reason,
    };
    tracing::debug!("malformed structured output, reprompting: {reason}");
    let mut retry = request.clone();
    retry.user = format!(
        "{}\n\nYour previous reply could not be used ({reason}). Reply with a single JSON object only.",
        request.user
    );
    let second = client.complete(&retry)?;
    match parse(&second.text) {
        Ok(v) => Ok((v, vec![first, second])),
        Err(reason) => Err(Error::MalformedOutput(reason)),
    }
}

/// Parses the embedded JSON object of a reply into `T`.
pub(crate) fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> std::result::Result<T, String> {
    let body = extract_json(text).ok_or_else(|| "no JSON object in reply".to_string())?;
    serde_json::from_str(body).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{BackendError, TextTask};
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Replies(Vec<&'static str>, AtomicUsize);

    impl TextClient for Replies {
        fn complete(&self, _: &TextRequest) -> std::result::Result<TextResponse, BackendError> {
            let i = self.1.fetch_add(1, Ordering::SeqCst);
            Ok(TextResponse {
                text: self.0[i.min(self.0.len() - 1)].to_string(),
                latency_ms: 0,
            })
        }
    }

    #[derive(serde::Deserialize, Debug, PartialEq)]
    struct Answer {
        n: u32,
    }

    fn req() -> TextRequest {
        TextRequest::new("s", "u", 0, TextTask::Free)
    }

    #[test]
    fn fenced_json() {
        assert_eq!(extract_json("```json\n{\"n\":1}\n```"), Some("{\"n\":1}"));
        assert_eq!(extract_json("nothing"), None);
    }

    #[test]
    fn first_reply_ok() {
        let c = Replies(vec!["{\"n\": 4}"], AtomicUsize::new(0));
        let (a, raw) = complete_structured(&c, &req(), parse_json::<Answer>).unwrap();
        assert_eq!(a, Answer { n: 4 });
        assert_eq!(raw.len(), 1);
    }

    #[test]
    fn one_reprompt_then_ok() {
        let c = Replies(vec!["sorry", "{\"n\": 2}"], AtomicUsize::new(0));
        let (a, raw) = complete_structured(&c, &req(), parse_json::<Answer>).unwrap();
        assert_eq!(a.n, 2);
        assert_eq!(raw.len(), 2);
    }

    #[test]
    fn malformed_after_reprompt() {
        let c = Replies(vec!["sorry", "still no"], AtomicUsize::new(0));
        let err = complete_structured(&c, &req(), parse_json::<Answer>).unwrap_err();
        assert!(matches!(err, Error::MalformedOutput(_)));
        assert_eq!(c.1.load(Ordering::SeqCst), 2);
    }
}
