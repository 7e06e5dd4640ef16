from abc import ABCMeta, abstractmethod

from .exceptions import ManifestError


class SerializableObject(metaclass=ABCMeta):
    """
    Base class for objects read from manifests or written into reports. Fields are serialized in declaration order.
    """

    @classmethod
    def create(cls, **kwargs):
        fields = cls._get_fields()
        unknown = [name for name in kwargs if name not in fields]
        if unknown:
            raise ValueError("Class %s has no attribute '%s'" % (cls.__name__, unknown[0]))

        instance = cls()
        for attr_name, field in fields.items():
            setattr(instance, attr_name, kwargs.get(attr_name, field.default))
        return instance

    @classmethod
    def deserialize(cls, item):
        if not isinstance(item, dict):
            raise ManifestError("Value '%s' is not an object" % str(item))

        fields = cls._get_fields()
        keys = {field.key_for(attr_name): attr_name for attr_name, field in fields.items()}
        for key in item:
            if key not in keys:
                raise ManifestError("Unknown key '%s' for %s" % (key, cls.__name__))

        instance = cls()
        for attr_name, field in fields.items():
            key = field.key_for(attr_name)
            if key in item:
                value = field.deserialize(item[key])
            elif field.required:
                raise ManifestError("Missing required key '%s' for %s" % (key, cls.__name__))
            else:
                value = field.default
            setattr(instance, attr_name, value)

        return instance

    @classmethod
    def deserialize_list(cls, item_list):
        return [cls.deserialize(item) for item in item_list]

    def serialize(self):
        return {
            field.key_for(attr_name): field.serialize(getattr(self, attr_name, None))
            for attr_name, field in self._get_fields().items()
        }

    @classmethod
    def _get_fields(cls):
        fields = {}
        for klass in reversed(cls.__mro__):
            fields.update({k: v for k, v in vars(klass).items() if isinstance(v, Field)})
        return fields


# =====================================================================
# Field types
# =====================================================================


class Field(metaclass=ABCMeta):
    def __init__(self, src=None, default=None, required=False):
        self.src = src
        self.default = default
        self.required = required

    def key_for(self, attr_name):
        return self.src or attr_name

    @abstractmethod
    def deserialize(self, value):  # pragma: no cover
        pass

    @abstractmethod
    def serialize(self, value):  # pragma: no cover
        pass


class SimpleField(Field):
    def deserialize(self, value):
        return value

    def serialize(self, value):
        return value


class IntegerField(SimpleField):
    def deserialize(self, value):
        if value is not None and (type(value) is not int):
            raise ManifestError("Value '%s' field is not an integer" % str(value))
        return value


class FloatField(SimpleField):
    def deserialize(self, value):
        if value is not None and (isinstance(value, bool) or not isinstance(value, (int, float))):
            raise ManifestError("Value '%s' field is not a number" % str(value))
        return float(value) if value is not None else None

    def serialize(self, value):
        return float(value) if value is not None else None


class StringField(SimpleField):
    def deserialize(self, value):
        if value is not None and not isinstance(value, str):
            raise ManifestError("Value '%s' field is not a string" % str(value))
        return value


class ListField(SimpleField):
    def deserialize(self, value):
        if value is not None and type(value) is not list:
            raise ManifestError("Value '%s' field is not a list" % str(value))
        return value


class DictField(SimpleField):
    def deserialize(self, value):
        if value is not None and type(value) is not dict:
            raise ManifestError("Value '%s' field is not an object" % str(value))
        return value


class ObjectField(Field):
    def __init__(self, item_class, **kwargs):
        super(ObjectField, self).__init__(**kwargs)
        self.item_class = item_class

    def deserialize(self, value):
        return self.item_class.deserialize(value) if value is not None else None

    def serialize(self, value):
        return value.serialize() if value is not None else None


class ObjectListField(ObjectField):
    def deserialize(self, value):
        if not isinstance(value, list):
            raise ManifestError("Value '%s' field is not a list" % str(value))

        return self.item_class.deserialize_list(value)

    def serialize(self, value):
        if not isinstance(value, list):
            raise ManifestError("Value '%s' field is not a list" % str(value))

        return [item.serialize() for item in value]
