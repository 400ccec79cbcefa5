use std::collections::HashMap;
use std::io::{BufRead, Read, Write};

use crate::model::{Article, DatasetRecord, SentenceAggregate, SentenceId, DATASET_SOURCE_TAG};

pub const CSV_HEADER: [&str; 7] = ["text", "news_link", "outlet", "topic", "type", "label_bias", "source"];

/// One record per decided sentence, in article order then sentence index.
pub fn export_dataset(aggregates: &[SentenceAggregate], articles: &[Article]) -> Vec<DatasetRecord> {
    let by_id: HashMap<&SentenceId, &SentenceAggregate> = aggregates.iter().map(|a| (&a.sentence_id, a)).collect();
    let mut records = Vec::new();
    for article in articles {
        for sentence in &article.sentences {
            let Some(label) = by_id.get(&sentence.sentence_id).and_then(|a| a.final_label) else {
                continue;
            };
            records.push(DatasetRecord {
                text: sentence.text.clone(),
                news_link: article.source_url.clone(),
                outlet: article.outlet.clone(),
                topic: article.topic.clone(),
                kind: article.lean.as_str().to_owned(),
                label_bias: label.into(),
                source: DATASET_SOURCE_TAG.to_owned(),
            });
        }
    }
    records
}

/// Semicolon-separated, every field quoted, header first.
pub fn write_csv<W: Write>(records: &[DatasetRecord], writer: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .delimiter(b';')
        .quote_style(csv::QuoteStyle::Always)
        .has_headers(false)
        .from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.text.as_str(),
            &r.news_link,
            &r.outlet,
            &r.topic,
            &r.kind,
            r.label_bias.as_str(),
            &r.source,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a CSV written by [`write_csv`], checking the header exactly.
pub fn read_csv<R: Read>(reader: R) -> csv::Result<Vec<DatasetRecord>> {
    let mut r = csv::ReaderBuilder::new().delimiter(b';').from_reader(reader);
    let header = r.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(csv::Error::from(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()),
        )));
    }
    r.deserialize().collect()
}

/// One JSON object per line.
pub fn write_jsonl<W: Write>(records: &[DatasetRecord], mut writer: W) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn read_jsonl<R: BufRead>(reader: R) -> std::io::Result<Vec<DatasetRecord>> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregation::{aggregate_sentence, Band};
    use crate::model::{label_for_probability, ArticleId, Label, LabelBias, Lean, Sentence};

    fn article() -> Article {
        let url = "https://news.example/x";
        let id = ArticleId::from_source_url(url);
        Article {
            article_id: id.clone(),
            title: "T".into(),
            author: None,
            outlet: "Example; Daily".into(),
            source_url: url.into(),
            topic: "gun control".into(),
            lean: Lean::Right,
            published_at: None,
            sentences: (0..3)
                .map(|i| Sentence {
                    sentence_id: SentenceId::for_position(url, i),
                    article_id: id.clone(),
                    index: i,
                    text: format!("Sentence \"{i}\"; with separators."),
                    p_biased: 0.2,
                    shown_label: label_for_probability(0.2),
                    is_quote: false,
                })
                .collect(),
        }
    }

    #[test]
    fn only_decided_sentences_are_exported() {
        let a = article();
        let aggs = vec![
            aggregate_sentence(a.sentences[0].sentence_id.clone(), 4, 1, 5, Band::default()),
            aggregate_sentence(a.sentences[1].sentence_id.clone(), 3, 3, 5, Band::default()),
            aggregate_sentence(a.sentences[2].sentence_id.clone(), 1, 1, 5, Band::default()),
        ];
        let records = export_dataset(&aggs, std::slice::from_ref(&a));
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].label_bias, LabelBias::Biased);
        assert_eq!(records[0].kind, "right");
        assert_eq!(records[0].source, DATASET_SOURCE_TAG);
    }

    #[test]
    fn nothing_decided_exports_nothing() {
        let a = article();
        assert!(export_dataset(&[], &[a]).is_empty());
    }

    #[test]
    fn csv_layout_and_roundtrip() {
        let a = article();
        let aggs: Vec<_> = a
            .sentences
            .iter()
            .map(|s| aggregate_sentence(s.sentence_id.clone(), 1, 5, 5, Band::default()))
            .collect();
        let records = export_dataset(&aggs, &[a]);
        assert!(records.iter().all(|r| r.label_bias == Label::NotBiased.into()));
        let mut buf = Vec::new();
        write_csv(&records, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("\"text\";\"news_link\";\"outlet\";\"topic\";\"type\";\"label_bias\";\"source\"\n"));
        assert!(text.contains("\"Non-biased\""));
        assert_eq!(read_csv(buf.as_slice()).unwrap(), records);

        let mut jl = Vec::new();
        write_jsonl(&records, &mut jl).unwrap();
        assert_eq!(String::from_utf8(jl.clone()).unwrap().lines().count(), 3);
        assert_eq!(read_jsonl(jl.as_slice()).unwrap(), records);
    }

    #[test]
    fn wrong_header_is_rejected() {
        let bad = "\"text\";\"link\"\n\"a\";\"b\"\n";
        assert!(read_csv(bad.as_bytes()).is_err());
    }
}
